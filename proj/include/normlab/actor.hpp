#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "normlab/backend.hpp"
#include "normlab/seq.hpp"

namespace normlab {

// Append-only store of sequences. Counterfactual edits and lesions build new
// Memory values; nothing mutates entries in place.
struct Memory {
  std::vector<Sequence> entries;

  void append(Sequence entry) { entries.push_back(std::move(entry)); }
  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// New memory missing exactly the entries matched by the predicate.
Memory lesion(const Memory& memory,
              const std::function<bool(const Sequence&)>& predicate);

// Content-addressable retrieval: argmax of cosine similarity between
// bag-of-token count vectors, ties broken by most recent insertion.
Sequence retrieve(const Memory& memory, const Sequence& query);
double bag_cosine(const Sequence& a, const Sequence& b);

// Stateless per-step intermediate representation: rebuilt from the current
// observation and the memory on every step.
struct GlobalWorkspace {
  Sequence observation;
  std::vector<Sequence> assemblies;
  std::optional<Sequence> action;
};

enum class FramingKind { summary, query, policy, memorize };

// A template over the workspace. Placeholders: {observation}, {assembly:k}
// (1-based over the full assembly list), {assemblies}, {retrieved}, {query},
// {memory}, {menu}, {self}, {action}. Rendering throws MissingPlaceholder
// when a referenced slot is unfilled.
struct FramingFunction {
  std::string text;
  FramingKind kind = FramingKind::summary;
};

struct ChainStep {
  enum class Kind { summary, retrieve };
  Kind kind = Kind::summary;
  FramingFunction framing;
  int max_completion = 8;  // summary steps only
};

struct SummaryChain {
  std::vector<ChainStep> steps;
  FramingFunction policy;
  // Empty text = default framing: the serialized record [o, self:action].
  FramingFunction memorize;

  void validate() const;
};

// The default three-question chain and the default policy framing.
SummaryChain default_chain();
extern const char* kDefaultPolicyTemplate;

class Actor {
 public:
  Actor(std::string id, std::shared_ptr<PatternBackend> backend,
        SummaryChain chain = default_chain(), Memory memory = {});

  const std::string& id() const { return id_; }
  const Memory& memory() const { return memory_; }
  void set_memory(Memory m) { memory_ = std::move(m); }
  PatternBackend& backend() const { return *backend_; }
  std::shared_ptr<PatternBackend> backend_ptr() const { return backend_; }
  const SummaryChain& chain() const { return chain_; }

  // Builds the workspace for observation o: pinned rules first, then each
  // chain step's assembly in order. Deterministic given the seed for
  // enumerable backends.
  GlobalWorkspace run_summary_chain(const Sequence& o, std::uint64_t seed) const;

  enum class ActMode { arg_max, sample };

  // Candidate-restricted selection (max log-probability under the framed
  // policy context, or a seeded draw from the frame-normalized
  // probabilities), or a free sampled completion when no candidates are
  // given. Writes the action into the workspace.
  Sequence act(GlobalWorkspace& workspace,
               const std::vector<Sequence>* candidates, std::uint64_t seed,
               ActMode mode = ActMode::arg_max) const;

  // Appends exactly one entry: the memorize framing of the workspace.
  void remember(const GlobalWorkspace& workspace);

  // run_summary_chain -> act -> remember.
  Sequence step(const Sequence& o, std::uint64_t seed,
                const std::vector<Sequence>* candidates = nullptr,
                ActMode mode = ActMode::arg_max);

  // Pinned rule assemblies, prepended to every workspace until removed.
  void inject_explicit_norm(const Sequence& rule);
  bool remove_explicit_norm(const Sequence& rule);
  const std::vector<Sequence>& pinned_rules() const { return pins_; }

  // The policy context for a bare observation with no chain run: full memory
  // plus pinned rules, an optional pinned context assembly, and an optional
  // candidate menu. This is the projection used by the certification
  // procedures, where the workspace must be a function of (o, memory) alone.
  Sequence policy_context(const Sequence& o,
                          const std::optional<Sequence>& pinned_assembly,
                          const std::vector<Sequence>* candidates) const;

  // Renders the policy framing over an existing workspace.
  Sequence policy_context(const GlobalWorkspace& workspace,
                          const std::vector<Sequence>* candidates) const;

  int max_free_action = 16;

 private:
  std::string id_;
  std::shared_ptr<PatternBackend> backend_;
  SummaryChain chain_;
  Memory memory_;
  std::vector<Sequence> pins_;
};

}  // namespace normlab
