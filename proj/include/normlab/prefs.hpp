#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "normlab/backend.hpp"
#include "normlab/seq.hpp"

namespace normlab {

inline constexpr double kPrefTolerance = 1e-9;

// Where a guidance element comes from; carried as metadata on elicitations.
enum class GuidanceOrigin { social_generic, social_idiosyncratic, non_social };

struct GuidanceElement {
  std::string label;
  Sequence influence_text;  // the assembly injected as context
  GuidanceOrigin origin = GuidanceOrigin::social_generic;
};

struct PairwiseResult {
  Sequence x0, x1;
  double p0 = 0.0, p1 = 0.0;  // frame-normalized choice probabilities
  int direction = 0;          // +1: x0 strictly preferred, -1: x1, 0: tie
  bool symmetrized = false;
};

// Forced choice between x0 and x1 under influence u. The conditioning
// context presents u, the option menu, and a choice prompt; order effects
// are real data, so symmetrization (averaging both presentation orders) is
// opt-in.
PairwiseResult elicit_pairwise(PatternBackend& backend, const Sequence& u,
                               const Sequence& x0, const Sequence& x1,
                               bool symmetrize = false);

struct PreferenceEdge {
  std::size_t i = 0, j = 0;  // item indices, i < j
  double p_i = 0.0, p_j = 0.0;
  int direction = 0;  // +1: i over j, -1: j over i, 0: tie (weak both ways)
};

// A complete elicited relation: one edge per unordered pair. Not required to
// be transitive or acyclic; cycles are data.
struct PreferenceRelation {
  std::vector<Sequence> items;
  Sequence context;  // u
  std::vector<PreferenceEdge> edges;
  std::vector<std::string> elicitation_log;  // deterministic order, logged

  const PreferenceEdge& edge(std::size_t i, std::size_t j) const;
  bool strictly_prefers(std::size_t i, std::size_t j) const;
  std::string to_json() const;
};

PreferenceRelation elicit_relation(PatternBackend& backend, const Sequence& u,
                                   const std::vector<Sequence>& items,
                                   bool symmetrize = false);

// Top choice over a full menu (frame-normalized over the menu), plus the
// argmax ranking; pairwise and ranking views of the same backend can
// disagree, and the discrepancy is reported rather than reconciled.
struct RankingResult {
  std::vector<std::size_t> order;  // best first
  std::vector<double> probs;       // per item, menu-normalized
};
RankingResult elicit_ranking(PatternBackend& backend, const Sequence& u,
                             const std::vector<Sequence>& items);

// All simple directed cycles over strict edges, up to max_len, each reported
// with its smallest item index first.
std::vector<std::vector<std::size_t>> detect_cycles(const PreferenceRelation& rel,
                                                    int max_len = 3);

struct IiaViolation {
  std::vector<std::size_t> menu_small, menu_big;
  std::size_t item_x = 0, item_y = 0;  // order of x vs y flips between menus
  double p_x_small = 0, p_y_small = 0, p_x_big = 0, p_y_big = 0;
};

// Menus are index sets into `items` (size >= 2). Menu pairs differing by a
// single added item are compared; the menu list must contain at least one
// such pair. Reports every flip of the strict order of two shared items.
std::vector<IiaViolation> check_iia(PatternBackend& backend, const Sequence& u,
                                    const std::vector<Sequence>& items,
                                    const std::vector<std::vector<std::size_t>>& menus);

// --- Polarization from top-choice transmission ------------------------------

enum class TransmitMode { top_only, full_relation };

struct PolarizationConfig {
  TransmitMode transmit = TransmitMode::top_only;
  int trials = 1;
  // 0: every identity utters once per trial; otherwise this many utterances
  // are drawn per trial with identities sampled uniformly.
  int draws_per_trial = 0;
  BackendConfig learner;  // fresh learner per trial
};

struct PolarizationTrial {
  int trial = 0;
  std::vector<double> item_probs;  // learner class probabilities over X
  double bimodality = 0.0;         // mass on observed tops minus the rest
};

struct PolarizationResult {
  std::vector<Sequence> items;
  std::vector<bool> is_extreme;  // item is some identity's top choice
  std::vector<PolarizationTrial> trials;
  std::vector<std::string> corpus_preview;  // first trial's utterances
};

// CSV with the documented columns: mode, trial, item, probability,
// bimodality (one row per trial and item).
std::string polarization_csv(const PolarizationResult& result, TransmitMode mode);

// Each identity holds a full preference ordering over a common item set.
// Transmission generates an utterance corpus (top-only: "<who> chooses <x>";
// full: "<who> prefers <x1> to <x2> ... "), trains a fresh learner on it,
// and reports the learner's frame probabilities over the items.
PolarizationResult polarization_experiment(
    const std::vector<std::vector<Sequence>>& identity_orderings,
    const PolarizationConfig& config, std::uint64_t seed);

}  // namespace normlab
