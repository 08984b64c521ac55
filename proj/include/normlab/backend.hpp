#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "normlab/seq.hpp"

namespace normlab {

// Reserved symbols. The tokenizer can never produce these as single tokens,
// so they are safe as out-of-band markers.
inline const std::string kEos = "</s>";
inline const std::string kBos = "<s>";

struct NextSymbolDistribution {
  // Sorted by token, end-of-sequence last.
  std::vector<std::pair<std::string, double>> support;
  // Probability assigned to each symbol purely by smoothing (0 when sparse).
  double floor_mass = 0.0;
  bool full_support = true;

  double prob(const std::string& token) const;
  double total() const;
  // Throws if probabilities are negative or do not sum to 1 within 1e-12
  // (sparse supports must sum to 1 as well; they enumerate every symbol
  // with nonzero mass).
  void validate() const;
};

enum class BackendKind { table, weighted, remote };

struct BackendConfig {
  BackendKind kind = BackendKind::table;
  int ngram_order = 2;             // k >= 1
  double smoothing_lambda = 0.5;   // add-lambda
  double sanction_discount = 1.0;  // (0,1], weighted kind only
  double sanction_boost = 1.0;     // >= 1, weighted kind only
  double rule_discount = 1.0;      // (0,1], weighted kind only
  // Which sanction clause texts convey disapproval/approval. Valence is
  // conventional, so it is configuration, never inferred from text.
  std::vector<Sequence> negative_sanctions;
  std::vector<Sequence> positive_sanctions;
  // Base vocabulary in addition to anything seen in training or context.
  std::vector<std::string> base_vocabulary;
  std::size_t enumeration_budget = 200000;
  // Remote kind only.
  std::string endpoint;
  std::string api_key;
  int mc_samples = 256;
  int max_retries = 3;
  int max_in_flight = 4;

  void validate() const;
};

struct Corpus {
  std::vector<Sequence> entries;
  bool empty() const { return entries.empty(); }
};

struct KlResult {
  double value = 0.0;
  double std_error = 0.0;  // 0 for exact computations
  bool exact = true;
};

// Next-symbol predictor interface. Enumerable implementations are pure:
// identical config and training history give bitwise-identical distributions.
class PatternBackend {
 public:
  virtual ~PatternBackend() = default;

  virtual NextSymbolDistribution next_distribution(const Sequence& context) const = 0;
  virtual Sequence sample_completion(const Sequence& context, int max_len,
                                     std::uint64_t seed) const = 0;
  virtual double log_prob(const Sequence& context, const Sequence& continuation) const = 0;
  virtual void consolidate(const Corpus& corpus) = 0;
  virtual KlResult kl_divergence(const Sequence& c1, const Sequence& c2,
                                 int horizon = 1) const = 0;
  virtual bool enumerable() const = 0;
  virtual const BackendConfig& config() const = 0;
};

// A rule assembly recognized in conditioning context: RULE : avoid <action>
// or RULE : prefer <action>.
struct ContextRule {
  bool avoid = true;
  Sequence action;
};

// Validates and parses a rule sequence; throws MalformedRule on failure.
ContextRule parse_rule(const Sequence& rule);
bool is_rule(const Sequence& seq);

// Count-based backend serving the table and weighted kinds.
//
// Two layers:
//   * an order-k count table with add-lambda smoothing over free text, and
//   * a precedent store of action records [obs, j:action(, i:sanction)*].
//
// Conditioning contexts are parsed at query time: complete records become
// in-context precedents, RULE assemblies become in-context rules, and the
// remaining text forms the query. When the context tail is an action-emission
// prompt (`<id> :`, optionally mid-action), the distribution over the next
// symbol is the smoothed mixture of precedent actions whose observation
// occurs contiguously in the query text; the weight of each precedent is
//
//   count * discount^(#negative sanction clauses) * boost^(#positive)
//         * rule_discount^(+1 per in-context avoid-rule naming the action,
//                          -1 per prefer-rule)
//
// with all exponents forced to zero for the table kind. A weighted backend
// with discount = boost = rule_discount = 1 is therefore identical to a
// table backend. When no precedent matches, or the tail is not an emission
// prompt, the order-k table answers instead.
class CountBackend : public PatternBackend {
 public:
  explicit CountBackend(BackendConfig config);
  CountBackend(BackendConfig config, const Corpus& corpus);

  NextSymbolDistribution next_distribution(const Sequence& context) const override;
  Sequence sample_completion(const Sequence& context, int max_len,
                             std::uint64_t seed) const override;
  double log_prob(const Sequence& context, const Sequence& continuation) const override;
  void consolidate(const Corpus& corpus) override;
  KlResult kl_divergence(const Sequence& c1, const Sequence& c2,
                         int horizon = 1) const override;
  bool enumerable() const override { return true; }
  const BackendConfig& config() const override { return config_; }

  // Snapshot of all mutable state as a JSON string (count maps only, no
  // binary payloads); restore() inverts it.
  std::string snapshot() const;
  void restore(const std::string& snapshot_json);

  // Tokens the backend currently smooths over, before any context is added.
  std::vector<std::string> trained_vocabulary() const;

 private:
  struct Precedent {
    Sequence observation;
    Sequence action;
    int negative = 0;
    int positive = 0;
    double count = 1.0;
  };

  struct ParsedContext {
    std::vector<Precedent> precedents;  // in-context records
    std::vector<ContextRule> rules;
    Sequence query;                     // plain text incl. emission observation
    bool emission = false;
    std::string emitter_id;
    Sequence partial;                   // action tokens already emitted
  };

  ParsedContext parse_context(const Sequence& context) const;
  std::vector<std::string> active_vocabulary(const Sequence& context) const;
  NextSymbolDistribution table_distribution(const Sequence& context,
                                            const std::vector<std::string>& vocab) const;
  NextSymbolDistribution precedent_distribution(const ParsedContext& parsed,
                                                const std::vector<std::string>& vocab) const;
  void ingest_text(const Sequence& entry);
  void ingest_record(const ParsedRecord& record);
  double precedent_weight(const Precedent& p, const std::vector<ContextRule>& rules) const;
  double kl_horizon(const Sequence& c1, const Sequence& c2, int horizon) const;

  BackendConfig config_;
  std::map<std::string, std::map<std::string, double>> ngram_;  // ctx key -> successor counts
  std::vector<Precedent> store_;                                // consolidated precedents
  std::map<std::string, double> vocab_;                         // token -> seen count
  mutable std::shared_mutex mutex_;
};

// Factory for the enumerable kinds; remote construction lives in remote.hpp.
std::unique_ptr<PatternBackend> make_count_backend(const BackendConfig& config,
                                                   const Corpus& corpus = {});

}  // namespace normlab
