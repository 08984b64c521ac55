#pragma once

#include <optional>
#include <string>
#include <vector>

#include "normlab/backend.hpp"
#include "normlab/prefs.hpp"
#include "normlab/seq.hpp"

namespace normlab {

enum class ExperimentKind {
  norm_stability,
  norm_adoption,
  tipping_point,
  consolidation_lesion,
  polarization,
};

ExperimentKind experiment_kind_from_string(const std::string& s);
std::string to_string(ExperimentKind k);

// Desk-scale experiment definition. The same population machinery drives the
// stability, adoption and tipping runs: actors share one precedent backend,
// act by seeded draws from their exact class probabilities, observers emit
// sanctions driven by their own sanctioning precedents, and every record is
// broadcast into every memory.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::norm_stability;
  int population = 8;
  int horizon = 50;
  std::vector<std::uint64_t> seeds = {1};
  BackendConfig backend;

  // The shared decision context and the action pair.
  std::string context = "the norm context comes up";
  std::string norm_action = "hello";
  std::string violation_action = "growl";
  std::string witness_observation = "someone chose growl";
  std::string sanction = "shame on you";
  std::string pass_action = "look away";

  // Initial precedent seeding per actor.
  int seed_norm = 8;
  int seed_violation = 2;
  int seed_sanction = 6;
  int seed_pass = 1;

  bool sanctions_enabled = true;  // the stability ablation turns this off

  // norm_adoption:
  int newcomer_contrary = 0;  // contrary precedents pre-seeded into the newcomer

  // tipping_point:
  std::vector<double> minority_grid = {0.0, 0.125, 0.25, 0.375, 0.5,
                                       0.625, 0.75, 0.875, 1.0};
  int minority_strength = 40;  // committed-minority precedent count

  // consolidation_lesion:
  int consolidation_reps = 50;

  // polarization:
  PolarizationConfig polarization;
  std::vector<std::vector<std::string>> identity_orderings;

  void validate() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

// Long-format metrics: one row per (seed, point, metric). `point` is the
// tick for time-series experiments and the sweep value for sweeps.
struct MetricsRow {
  std::string experiment;
  std::uint64_t seed = 0;
  double point = 0.0;
  std::string metric;
  double value = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  // Long-format invariant: for each metric, every seed reports the same set
  // of points. Throws on violation.
  void validate() const;
  std::string to_csv() const;
  std::optional<double> lookup(std::uint64_t seed, double point,
                               const std::string& metric) const;
  std::vector<double> series(std::uint64_t seed, const std::string& metric) const;
};

// Single-seed runners.
MetricsTable norm_stability(const ExperimentConfig& config, std::uint64_t seed);
MetricsTable norm_adoption(const ExperimentConfig& config, std::uint64_t seed);
MetricsTable tipping_point(const ExperimentConfig& config, std::uint64_t seed);
MetricsTable consolidation_lesion(const ExperimentConfig& config, std::uint64_t seed);
MetricsTable polarization_metrics(const ExperimentConfig& config, std::uint64_t seed);

// Dispatches on kind and merges the configured seeds in order; `workers`
// > 1 runs seeds on a thread pool with a deterministic merge.
MetricsTable run_experiment(const ExperimentConfig& config, int workers = 1);

}  // namespace normlab
