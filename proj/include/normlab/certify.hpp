#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "normlab/actor.hpp"
#include "normlab/backend.hpp"
#include "normlab/seq.hpp"

namespace normlab {

// Strict inequalities are certified only with this margin; anything closer
// is not treated as evidence.
inline constexpr double kCertTolerance = 1e-9;

struct EpsilonResult {
  bool similar = false;
  double kl = 0.0;
  double std_error = 0.0;
};

// u ~ v in context c: KL[p(.|c) || p(.|r^{u->v}(c))] < eps.
EpsilonResult epsilon_similar_detail(PatternBackend& backend, const Sequence& u,
                                     const Sequence& v, const Sequence& c,
                                     double eps, int horizon = 1);
bool epsilon_similar(PatternBackend& backend, const Sequence& u, const Sequence& v,
                     const Sequence& c, double eps, int horizon = 1);

// A finite action frame: the candidate actions considered in context, with
// the epsilon-equivalence partition over them. Certification probabilities
// are normalized within the frame, which keeps every check exact.
struct ActionFrame {
  Sequence context_label;  // may be empty (context-free)
  Sequence observation;
  std::vector<Sequence> candidates;
  double epsilon = 0.1;
  int horizon = 1;
  std::size_t target = 0;       // index of a
  std::size_t alternative = 1;  // index of a'
  std::vector<std::size_t> class_of;          // candidate -> class id
  std::vector<std::vector<std::size_t>> classes;  // class id -> candidates

  std::size_t target_class() const { return class_of[target]; }
  std::size_t alternative_class() const { return class_of[alternative]; }
};

// Computes the partition by pairwise epsilon-similarity (probe context:
// the frame label followed by the utterance) with transitive closure, and
// validates that the target actions fall into distinct classes.
ActionFrame build_action_frame(PatternBackend& backend, Sequence context_label,
                               Sequence observation, std::vector<Sequence> candidates,
                               double epsilon, std::size_t target = 0,
                               std::size_t alternative = 1, int horizon = 1);

// A frame whose classes are declared rather than measured: every candidate
// is its own class. Experiment configs declare their action pairs this way;
// the certification CLI always measures.
ActionFrame declared_action_frame(Sequence context_label, Sequence observation,
                                  std::vector<Sequence> candidates, double epsilon,
                                  std::size_t target = 0, std::size_t alternative = 1);

// --- Counterfactual memory operators -------------------------------------

// Replaces the action of every record [obs~o, j:act~a] with a'; other
// entries are untouched. Throws NoMatchingRecords / EditRejected.
Memory edit_context_free(PatternBackend& backend, const Memory& memory,
                         const Sequence& o, const Sequence& a, const Sequence& a_prime,
                         double eps);

struct ContextualEditResult {
  Memory memory;
  int considered = 0;  // ceil(f * N_matching)
  int edited = 0;      // entries actually rewritten (context filter applied)
};

// The fractional operator: shuffle matching records with the seed, take the
// first ceil(f*N_matching), and edit only those whose context label equals c.
// Records carry their context as an observation prefix: an entry
// [<c> <o>, j:a] is in context c; an entry [<o>, j:a] has the empty context.
// `check_distinct` re-verifies a' !~ a inside the operator; the certifiers
// pass false because the frame already validated class distinctness.
ContextualEditResult edit_contextual(PatternBackend& backend, const Memory& memory,
                                     const Sequence& o, const Sequence& c,
                                     const Sequence& a, const Sequence& a_prime,
                                     double f, double eps, std::uint64_t seed,
                                     bool check_distinct = true);

// Replaces `count` seeded-chosen records [obs, j:act~a] with the sanctioned
// form [obs, j:act, sanctioner:s]. Throws InsufficientMatches.
Memory insert_sanction(const Memory& memory, PatternBackend& backend,
                       const Sequence& a, const std::string& sanctioner_id,
                       const Sequence& s, int count, double eps,
                       std::uint64_t seed);

// --- Class probabilities ---------------------------------------------------

struct ClassProbs {
  std::vector<double> by_candidate;
  std::vector<double> by_class;
  double std_error = 0.0;  // 0 when exact (enumerable backend)
  bool exact = true;
};

// Frame-normalized policy probabilities, summed per epsilon-class. The
// conditioning context is the actor's policy framing over (observation,
// pinned assemblies, candidate menu); `workspace_pin` realizes the
// "z^i = c" conditioning of the contextual definitions. Exact for
// enumerable backends; Monte-Carlo with a reported standard error otherwise.
ClassProbs action_class_prob(const Actor& actor, const ActionFrame& frame,
                             const std::optional<Sequence>& workspace_pin,
                             std::uint64_t seed = 0);

// --- Certification reports -------------------------------------------------

enum class Verdict { certified, refuted, inconclusive };
std::string to_string(Verdict v);

struct Inequality {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

struct FGridPoint {
  double f = 0.0;
  double p_target = 0.0;
  double p_alternative = 0.0;
  int edits = 0;
};

struct CertificationReport {
  std::string procedure;
  Verdict verdict = Verdict::inconclusive;
  std::vector<Inequality> inequalities;
  std::vector<FGridPoint> grid;
  double estimator_error = 0.0;
  std::string detail;

  std::string to_json() const;
};

// Convention sensitivity: fresh seeded edits per grid point, then
//   (i)  p(a | edit f=1) < p(a | original)
//   (ii) p(a | edit f=1) < p(a' | edit f=1)
//   (iii) p(a' | edit f) strictly increasing along the grid.
// The frame's context label, when nonempty, pins the context assembly and
// scopes the edits (contextual variant); an empty label gives the
// context-free variant.
CertificationReport certify_convention_sensitivity(const Actor& actor,
                                                   const ActionFrame& frame,
                                                   const std::vector<double>& f_grid,
                                                   std::uint64_t seed);

struct ReproductionResult {
  bool reproduced = false;
  std::optional<double> f_min;
  CertificationReport report;
};

// (f,r)-reproduction: p(a-class | original) > r, a minimal grid f with
// p(a'-class | edit f) > r, and monotone increase with positive margin
// between successive grid points. A never-crossed threshold is reported as
// reproduced=false rather than thrown.
ReproductionResult certify_reproduction(const Actor& actor, const ActionFrame& frame,
                                        double r, const std::vector<double>& f_grid,
                                        std::uint64_t seed);

// Sanction sensitivity: p(a-class) strictly drops (negative valence) or
// rises (positive) after insert_sanction; the contextual variant pins the
// frame's context label. Monte-Carlo estimates demand a 2-standard-error
// margin or the verdict is inconclusive.
CertificationReport certify_sanction_sensitivity(
    const Actor& actor, const ActionFrame& frame, const Sequence& s,
    bool contextual, std::uint64_t seed, const std::string& sanctioner_id,
    Valence valence = Valence::negative, int count = 1);

// --- Collective policies ---------------------------------------------------

// Product over actors of their frame-normalized class probability for their
// part of the joint action.
double collective_policy_prob(const std::vector<Actor>& actors,
                              const std::vector<std::pair<std::string, Sequence>>& joint,
                              const std::map<std::string, ActionFrame>& frames);

// Temporally extended variant: per-tick product over a sequence of joints.
double collective_policy_prob(
    const std::vector<Actor>& actors,
    const std::vector<std::vector<std::pair<std::string, Sequence>>>& joints_over_time,
    const std::map<std::string, ActionFrame>& frames);

// --- Norm classification ---------------------------------------------------

struct NormClassification {
  bool normative = false;
  bool narrow_scope_convention = false;
  std::vector<std::string> scope;  // ids reproducing the sanctioning pattern
  std::map<std::string, bool> per_actor;
  std::string detail;

  std::string to_json() const;
};

// A behavior (a over a') is normative when a sanctioning pattern against a'
// (or in favor of a) is (f,r)-reproduced by at least `generic_threshold` of
// the population, and those reproducers' sanctioning records appear in other
// actors' memories. `sanction_frame` frames the sanctioning choice itself
// (candidates: sanction vs abstain, target = the sanction).
NormClassification classify_normative(const std::vector<Actor>& population,
                                      const ActionFrame& sanction_frame,
                                      double reproduction_rate,
                                      const std::vector<double>& f_grid,
                                      double generic_threshold, std::uint64_t seed);

}  // namespace normlab
