#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "normlab/actor.hpp"
#include "normlab/backend.hpp"
#include "normlab/seq.hpp"

namespace normlab {

// World state of the linguistic environment: free-text payload plus the tick
// counter and the seed material driving any stochastic rules.
struct EnvState {
  Sequence payload;
  int tick = 0;
  std::uint64_t rng_state = 0;
};

// One weighted template choice of a stochastic rule.
struct RuleTemplate {
  std::string text;
  double weight = 1.0;
};

// Observation rule: first rule whose pattern occurs in the state payload
// applies ("*" matches everything). Templates may reference {state} and
// {self}.
struct ObservationRule {
  std::string pattern;
  std::vector<RuleTemplate> templates;
};

// Transition rule: matched against the joint action. Templates may reference
// {state}, {actor}, {action} and {actions}. When `requires` is nonempty and
// absent from the state payload, `error_template` produces the next state
// instead (in-band error feedback).
struct TransitionRule {
  std::string action_pattern;
  std::string requires_in_state;
  std::vector<RuleTemplate> templates;
  std::string error_template;
};

struct ActorSpec {
  std::string id;
  std::string backend_ref = "shared";
  std::vector<std::string> memory;
  std::vector<std::string> pinned_rules;
  std::optional<SummaryChain> chain;  // default: single-retrieve chain
  Actor::ActMode act_mode = Actor::ActMode::arg_max;
  std::uint64_t seed = 0;
};

struct CandidateRule {
  std::string pattern;  // matched against the actor's observation
  std::vector<Sequence> candidates;
};

struct Scenario {
  std::string name;
  std::string initial_state;
  int horizon = 1;
  std::map<std::string, BackendConfig> backend_configs;
  std::map<std::string, std::vector<std::string>> backend_corpora;
  std::vector<ActorSpec> actors;
  // Per-actor observation rules; the "*" key provides defaults.
  std::map<std::string, std::vector<ObservationRule>> observation_rules;
  std::vector<TransitionRule> transition_rules;
  bool identity_fallback = true;
  std::vector<CandidateRule> candidate_rules;
  std::string game_master_ref;  // optional storyteller backend

  void validate() const;
  static Scenario from_json_text(const std::string& text);
  static Scenario load(const std::string& path);
};

enum class Verbosity { actions, assemblies, full };
Verbosity verbosity_from_string(const std::string& s);

struct TickRecord {
  int tick = 0;
  Sequence state;
  std::map<std::string, Sequence> observations;
  std::map<std::string, Sequence> actions;
  std::map<std::string, std::vector<Sequence>> assemblies;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> records;  // serialized joint action records
};

struct Trace {
  std::string scenario_name;
  std::uint64_t seed = 0;
  int ticks_requested = 0;
  Verbosity verbosity = Verbosity::actions;
  std::vector<std::string> actor_ids;
  std::vector<TickRecord> ticks;
  std::optional<std::string> error;  // set when an episode aborts

  // JSON Lines: a schema-versioned header line followed by one object per
  // tick (and a final error object for aborted episodes).
  std::string to_jsonl() const;
  static Trace from_jsonl(const std::string& text);
};

// Throws Error when the text is not a valid trace, including the structural
// no-reward guarantee: no object anywhere in the trace may carry a scalar
// reward/return field.
void validate_trace_jsonl(const std::string& text);

// The engine owns the scenario's actors and shared backends. Episodes are
// pure functions of (scenario, seed): actors and backends are rebuilt from
// the scenario for every run.
class Engine {
 public:
  explicit Engine(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }

  // One observation per actor, in scenario actor order.
  std::vector<Sequence> observe_all(const EnvState& state) const;

  // Applies the first matching transition rule (or the storyteller backend,
  // or the identity fallback) and advances the tick.
  EnvState transition(const EnvState& state, const std::vector<ActionRecord>& joint,
                      std::uint64_t seed) const;

  // Runs observe -> simultaneous actor steps -> transition for `ticks`
  // ticks (scenario horizon if <= 0). `eval_order`, when given, permutes the
  // order actor computations are issued in; the trace is invariant to it.
  Trace run_episode(std::uint64_t seed, int ticks = 0,
                    Verbosity verbosity = Verbosity::actions,
                    const std::vector<std::size_t>& eval_order = {});

  // The freshly-built actors/backends for a run (used by the certify CLI to
  // pull an actor out of a scenario).
  std::vector<Actor> build_actors() const;
  std::shared_ptr<PatternBackend> backend(const std::string& ref) const;

 private:
  Scenario scenario_;
  std::map<std::string, std::shared_ptr<PatternBackend>> backends_;
};

std::uint64_t fnv1a64(std::string_view s);

}  // namespace normlab
