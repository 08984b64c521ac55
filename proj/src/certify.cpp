#include "normlab/certify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "normlab/errors.hpp"

namespace normlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool obs_similar(PatternBackend& backend, const Sequence& recorded,
                 const Sequence& o, double eps) {
  if (recorded == o) return true;
  if (recorded.empty() || o.empty()) return false;
  return epsilon_similar(backend, recorded, o, recorded, eps);
}

bool action_similar(PatternBackend& backend, const Sequence& recorded,
                    const Sequence& a, double eps) {
  if (recorded == a) return true;
  if (recorded.empty() || a.empty()) return false;
  return epsilon_similar(backend, recorded, a, recorded, eps);
}

// Splits a record observation into (context label, base observation) against
// the query observation o. Records carry context as an observation prefix.
std::optional<std::pair<Sequence, Sequence>> split_context(
    PatternBackend& backend, const Sequence& recorded_obs, const Sequence& o,
    double eps) {
  if (obs_similar(backend, recorded_obs, o, eps)) {
    return std::make_pair(Sequence(), recorded_obs);
  }
  if (!o.empty() && recorded_obs.ends_with(o)) {
    const auto& toks = recorded_obs.tokens();
    Sequence prefix(
        std::vector<std::string>(toks.begin(), toks.end() - o.size()));
    return std::make_pair(std::move(prefix), o);
  }
  return std::nullopt;
}

struct MatchedRecord {
  std::size_t entry_index;
  ParsedRecord record;
  Sequence context_label;
};

std::vector<MatchedRecord> matching_records(PatternBackend& backend,
                                            const Memory& memory, const Sequence& o,
                                            const Sequence& a, double eps) {
  std::vector<MatchedRecord> out;
  for (std::size_t i = 0; i < memory.entries.size(); ++i) {
    auto rec = parse_record(memory.entries[i].text());
    if (!rec || rec->clauses.empty()) continue;
    auto split = split_context(backend, rec->observation, o, eps);
    if (!split) continue;
    if (!action_similar(backend, rec->clauses.front().second, a, eps)) continue;
    out.push_back(MatchedRecord{i, std::move(*rec), std::move(split->first)});
  }
  return out;
}

double require_margin(bool exact, double se_sum) {
  return exact ? kCertTolerance : std::max(kCertTolerance, 2.0 * se_sum);
}

nlohmann::json inequalities_json(const std::vector<Inequality>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& q : v) {
    arr.push_back({{"name", q.name}, {"lhs", q.lhs}, {"rhs", q.rhs}, {"holds", q.holds}});
  }
  return arr;
}

}  // namespace

EpsilonResult epsilon_similar_detail(PatternBackend& backend, const Sequence& u,
                                     const Sequence& v, const Sequence& c,
                                     double eps, int horizon) {
  if (eps <= 0.0) throw ConfigError("epsilon must be positive");
  const Sequence edited = replace_all(c, u, v);
  const KlResult kl = backend.kl_divergence(c, edited, horizon);
  EpsilonResult out;
  out.kl = kl.value;
  out.std_error = kl.std_error;
  out.similar = kl.value < eps;
  return out;
}

bool epsilon_similar(PatternBackend& backend, const Sequence& u, const Sequence& v,
                     const Sequence& c, double eps, int horizon) {
  return epsilon_similar_detail(backend, u, v, c, eps, horizon).similar;
}

ActionFrame build_action_frame(PatternBackend& backend, Sequence context_label,
                               Sequence observation, std::vector<Sequence> candidates,
                               double epsilon, std::size_t target,
                               std::size_t alternative, int horizon) {
  if (candidates.empty()) throw ConfigError("action frame needs candidates");
  if (target >= candidates.size() || alternative >= candidates.size()) {
    throw ConfigError("frame target indices out of range");
  }
  ActionFrame frame;
  frame.context_label = std::move(context_label);
  frame.observation = std::move(observation);
  frame.candidates = std::move(candidates);
  frame.epsilon = epsilon;
  frame.horizon = horizon;
  frame.target = target;
  frame.alternative = alternative;

  const std::size_t n = frame.candidates.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      Sequence probe = frame.context_label;
      probe.append(frame.candidates[i]);
      if (epsilon_similar(backend, frame.candidates[i], frame.candidates[j], probe,
                          epsilon, horizon)) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::map<std::size_t, std::size_t> roots;
  frame.class_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    auto [it, inserted] = roots.try_emplace(r, frame.classes.size());
    if (inserted) frame.classes.emplace_back();
    frame.class_of[i] = it->second;
    frame.classes[it->second].push_back(i);
  }
  if (frame.class_of[frame.target] == frame.class_of[frame.alternative]) {
    throw ConfigError(
        "frame target and alternative actions fall into the same epsilon class");
  }
  return frame;
}

ActionFrame declared_action_frame(Sequence context_label, Sequence observation,
                                  std::vector<Sequence> candidates, double epsilon,
                                  std::size_t target, std::size_t alternative) {
  if (candidates.size() < 2) throw ConfigError("declared frame needs >= 2 candidates");
  if (target >= candidates.size() || alternative >= candidates.size() ||
      target == alternative) {
    throw ConfigError("declared frame target indices invalid");
  }
  ActionFrame frame;
  frame.context_label = std::move(context_label);
  frame.observation = std::move(observation);
  frame.candidates = std::move(candidates);
  frame.epsilon = epsilon;
  frame.target = target;
  frame.alternative = alternative;
  frame.class_of.resize(frame.candidates.size());
  for (std::size_t i = 0; i < frame.candidates.size(); ++i) {
    frame.class_of[i] = i;
    frame.classes.push_back({i});
  }
  return frame;
}

Memory edit_context_free(PatternBackend& backend, const Memory& memory,
                         const Sequence& o, const Sequence& a, const Sequence& a_prime,
                         double eps) {
  if (action_similar(backend, a_prime, a, eps)) {
    throw EditRejected("a' is epsilon-similar to a; the edit requires a' !~ a");
  }
  const auto matches = matching_records(backend, memory, o, a, eps);
  if (matches.empty()) throw NoMatchingRecords("no records match [o~, j:a~]");
  Memory out = memory;
  for (const auto& m : matches) {
    ParsedRecord rec = m.record;
    rec.clauses.front().second = a_prime;
    out.entries[m.entry_index] = Sequence::tokenize(rec.serialize());
  }
  return out;
}

ContextualEditResult edit_contextual(PatternBackend& backend, const Memory& memory,
                                     const Sequence& o, const Sequence& c,
                                     const Sequence& a, const Sequence& a_prime,
                                     double f, double eps, std::uint64_t seed,
                                     bool check_distinct) {
  if (f <= 0.0 || f > 1.0) throw ConfigError("edit fraction f must be in (0,1]");
  if (check_distinct && action_similar(backend, a_prime, a, eps)) {
    throw EditRejected("a' is epsilon-similar to a in context c");
  }
  auto matches = matching_records(backend, memory, o, a, eps);
  if (matches.empty()) throw NoMatchingRecords("no records match [o~, j:a~]");

  std::mt19937_64 rng(mix_seed(seed, 0xed17u));
  std::shuffle(matches.begin(), matches.end(), rng);
  const int considered = static_cast<int>(
      std::ceil(f * static_cast<double>(matches.size())));

  ContextualEditResult result;
  result.memory = memory;
  result.considered = considered;
  for (int i = 0; i < considered; ++i) {
    const auto& m = matches[static_cast<std::size_t>(i)];
    if (m.context_label.text() != c.text()) continue;
    ParsedRecord rec = m.record;
    rec.clauses.front().second = a_prime;
    result.memory.entries[m.entry_index] = Sequence::tokenize(rec.serialize());
    ++result.edited;
  }
  return result;
}

Memory insert_sanction(const Memory& memory, PatternBackend& backend,
                       const Sequence& a, const std::string& sanctioner_id,
                       const Sequence& s, int count, double eps,
                       std::uint64_t seed) {
  if (count < 1) throw ConfigError("insert_sanction: count must be >= 1");
  if (!valid_actor_id(sanctioner_id)) {
    throw InvalidActorId("invalid sanctioner id: '" + sanctioner_id + "'");
  }
  std::vector<std::pair<std::size_t, ParsedRecord>> matches;
  for (std::size_t i = 0; i < memory.entries.size(); ++i) {
    auto rec = parse_record(memory.entries[i].text());
    if (!rec || rec->clauses.empty()) continue;
    if (!action_similar(backend, rec->clauses.front().second, a, eps)) continue;
    matches.emplace_back(i, std::move(*rec));
  }
  if (static_cast<int>(matches.size()) < count) {
    throw InsufficientMatches("need " + std::to_string(count) + " records matching [j:a~], found " +
                              std::to_string(matches.size()));
  }
  std::mt19937_64 rng(mix_seed(seed, 0x5a9cu));
  std::shuffle(matches.begin(), matches.end(), rng);
  Memory out = memory;
  for (int i = 0; i < count; ++i) {
    ParsedRecord rec = matches[static_cast<std::size_t>(i)].second;
    rec.clauses.emplace_back(sanctioner_id, s);
    out.entries[matches[static_cast<std::size_t>(i)].first] =
        Sequence::tokenize(rec.serialize());
  }
  return out;
}

ClassProbs action_class_prob(const Actor& actor, const ActionFrame& frame,
                             const std::optional<Sequence>& workspace_pin,
                             std::uint64_t seed) {
  const Sequence ctx =
      actor.policy_context(frame.observation, workspace_pin, &frame.candidates);
  ClassProbs out;
  out.by_candidate.assign(frame.candidates.size(), 0.0);
  out.by_class.assign(frame.classes.size(), 0.0);

  if (actor.backend().enumerable()) {
    std::vector<double> lp(frame.candidates.size());
    double mx = -kInf;
    for (std::size_t i = 0; i < frame.candidates.size(); ++i) {
      lp[i] = actor.backend().log_prob(ctx, frame.candidates[i]);
      mx = std::max(mx, lp[i]);
    }
    if (std::isinf(mx)) throw Error("no frame candidate has probability mass");
    double total = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      out.by_candidate[i] = std::exp(lp[i] - mx);
      total += out.by_candidate[i];
    }
    for (std::size_t i = 0; i < lp.size(); ++i) {
      out.by_candidate[i] /= total;
      out.by_class[frame.class_of[i]] += out.by_candidate[i];
    }
    out.exact = true;
    out.std_error = 0.0;
    return out;
  }

  // Monte-Carlo mode: sample completions and count frame hits.
  const int n = actor.backend().config().mc_samples;
  int max_len = 1;
  for (const auto& cand : frame.candidates) {
    max_len = std::max(max_len, static_cast<int>(cand.size()) + 1);
  }
  std::vector<int> hits(frame.candidates.size(), 0);
  int in_frame = 0;
  for (int i = 0; i < n; ++i) {
    const Sequence sample =
        actor.backend().sample_completion(ctx, max_len, mix_seed(seed, 0x3a3u, i));
    for (std::size_t j = 0; j < frame.candidates.size(); ++j) {
      if (sample == frame.candidates[j]) {
        ++hits[j];
        ++in_frame;
        break;
      }
    }
  }
  out.exact = false;
  if (in_frame == 0) {
    out.std_error = 1.0;
    return out;
  }
  for (std::size_t j = 0; j < frame.candidates.size(); ++j) {
    out.by_candidate[j] = static_cast<double>(hits[j]) / in_frame;
    out.by_class[frame.class_of[j]] += out.by_candidate[j];
  }
  double worst = 0.0;
  for (const double p : out.by_class) {
    worst = std::max(worst, std::sqrt(p * (1.0 - p) / in_frame));
  }
  out.std_error = worst;
  return out;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::certified: return "certified";
    case Verdict::refuted: return "refuted";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

std::string CertificationReport::to_json() const {
  nlohmann::json j;
  j["schema"] = "normlab.report.v1";
  j["procedure"] = procedure;
  j["verdict"] = to_string(verdict);
  j["inequalities"] = inequalities_json(inequalities);
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& g : grid) {
    grid_json.push_back({{"f", g.f},
                         {"p_target", g.p_target},
                         {"p_alternative", g.p_alternative},
                         {"edits", g.edits}});
  }
  j["f_grid"] = grid_json;
  j["estimator_error"] = estimator_error;
  j["detail"] = detail;
  return j.dump(2);
}

namespace {

void validate_grid(const std::vector<double>& f_grid) {
  if (f_grid.empty()) throw ConfigError("f_grid must be nonempty");
  for (std::size_t i = 0; i < f_grid.size(); ++i) {
    if (f_grid[i] <= 0.0 || f_grid[i] > 1.0) {
      throw ConfigError("f_grid values must lie in (0,1]");
    }
    if (i && f_grid[i] <= f_grid[i - 1]) {
      throw ConfigError("f_grid must be strictly increasing");
    }
  }
}

std::optional<Sequence> frame_pin(const ActionFrame& frame) {
  if (frame.context_label.empty()) return std::nullopt;
  return frame.context_label;
}

}  // namespace

CertificationReport certify_convention_sensitivity(const Actor& actor,
                                                   const ActionFrame& frame,
                                                   const std::vector<double>& f_grid,
                                                   std::uint64_t seed) {
  validate_grid(f_grid);
  CertificationReport report;
  report.procedure = "convention";
  const Sequence& a = frame.candidates[frame.target];
  const Sequence& a_prime = frame.candidates[frame.alternative];
  const auto pin = frame_pin(frame);

  const ClassProbs original = action_class_prob(actor, frame, pin, mix_seed(seed, 1));

  auto probs_at = [&](double f, std::uint64_t s, int* edits) {
    const ContextualEditResult edit =
        edit_contextual(actor.backend(), actor.memory(), frame.observation,
                        frame.context_label, a, a_prime, f, frame.epsilon, s,
                        /*check_distinct=*/false);
    if (edits) *edits = edit.edited;
    Actor ghost = actor;
    ghost.set_memory(edit.memory);
    return action_class_prob(ghost, frame, pin, mix_seed(s, 2));
  };

  try {
    int full_edits = 0;
    const ClassProbs full = probs_at(1.0, mix_seed(seed, 0xF1u), &full_edits);

    double se = std::max(original.std_error, full.std_error);
    std::vector<Inequality> checks;
    const double po_a = original.by_class[frame.target_class()];
    const double pf_a = full.by_class[frame.target_class()];
    const double pf_ap = full.by_class[frame.alternative_class()];
    checks.push_back({"p(a|f=1) < p(a|orig)", pf_a, po_a,
                      pf_a + require_margin(full.exact, original.std_error + full.std_error) < po_a});
    checks.push_back({"p(a|f=1) < p(a'|f=1)", pf_a, pf_ap,
                      pf_a + require_margin(full.exact, 2.0 * full.std_error) < pf_ap});

    double prev = -kInf;
    for (std::size_t i = 0; i < f_grid.size(); ++i) {
      int edits = 0;
      const ClassProbs probs = probs_at(f_grid[i], mix_seed(seed, 3, i), &edits);
      se = std::max(se, probs.std_error);
      const double p_ap = probs.by_class[frame.alternative_class()];
      report.grid.push_back(
          {f_grid[i], probs.by_class[frame.target_class()], p_ap, edits});
      if (i) {
        checks.push_back(
            {"p(a'|f=" + std::to_string(f_grid[i - 1]) + ") < p(a'|f=" +
                 std::to_string(f_grid[i]) + ")",
             prev, p_ap,
             prev + require_margin(probs.exact, 2.0 * se) < p_ap});
      }
      prev = p_ap;
    }
    report.inequalities = std::move(checks);
    report.estimator_error = se;
    const bool all_hold =
        std::all_of(report.inequalities.begin(), report.inequalities.end(),
                    [](const Inequality& q) { return q.holds; });
    if (all_hold) {
      report.verdict = Verdict::certified;
    } else if (original.exact) {
      report.verdict = Verdict::refuted;
    } else {
      report.verdict = Verdict::inconclusive;
      report.detail = "Monte-Carlo margin insufficient for at least one inequality";
    }
  } catch (const NoMatchingRecords& e) {
    report.verdict = Verdict::inconclusive;
    report.detail = e.what();
  }
  return report;
}

ReproductionResult certify_reproduction(const Actor& actor, const ActionFrame& frame,
                                        double r, const std::vector<double>& f_grid,
                                        std::uint64_t seed) {
  if (r <= 0.0 || r >= 1.0) throw ConfigError("reproduction rate r must be in (0,1)");
  validate_grid(f_grid);
  ReproductionResult result;
  result.report.procedure = "reproduction";
  const Sequence& a = frame.candidates[frame.target];
  const Sequence& a_prime = frame.candidates[frame.alternative];
  const auto pin = frame_pin(frame);

  try {
    const ClassProbs original =
        action_class_prob(actor, frame, pin, mix_seed(seed, 1));
    const double p_orig = original.by_class[frame.target_class()];
    result.report.inequalities.push_back(
        {"p(a|orig) > r", r, p_orig,
         r + require_margin(original.exact, original.std_error) < p_orig});

    // The probability of a' is a step function of f (edits come in whole
    // records), so equal grid points are tolerated: the requirement is no
    // decrease anywhere plus a strictly positive overall margin.
    double prev = -kInf;
    bool nondecreasing = true;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < f_grid.size(); ++i) {
      const ContextualEditResult edit = edit_contextual(
          actor.backend(), actor.memory(), frame.observation, frame.context_label,
          a, a_prime, f_grid[i], frame.epsilon, mix_seed(seed, 2, i),
          /*check_distinct=*/false);
      Actor ghost = actor;
      ghost.set_memory(edit.memory);
      const ClassProbs probs =
          action_class_prob(ghost, frame, pin, mix_seed(seed, 3, i));
      const double p_ap = probs.by_class[frame.alternative_class()];
      result.report.grid.push_back(
          {f_grid[i], probs.by_class[frame.target_class()], p_ap, edit.edited});
      if (i && p_ap < prev - kCertTolerance) nondecreasing = false;
      if (i == 0) first = p_ap;
      last = p_ap;
      if (!result.f_min && p_ap > r + kCertTolerance) {
        result.f_min = f_grid[i];
      }
      prev = p_ap;
    }
    const bool monotone = nondecreasing && (last - first > kCertTolerance);
    result.report.inequalities.push_back(
        {"p(a'|f) nondecreasing with positive overall margin", first, last, monotone});
    const bool above = result.report.inequalities[0].holds;
    result.reproduced = above && monotone && result.f_min.has_value();
    result.report.verdict =
        result.reproduced ? Verdict::certified : Verdict::refuted;
    if (!result.f_min) {
      result.report.detail = "threshold r never crossed on the f grid";
    }
  } catch (const NoMatchingRecords& e) {
    result.report.verdict = Verdict::inconclusive;
    result.report.detail = e.what();
  }
  return result;
}

CertificationReport certify_sanction_sensitivity(
    const Actor& actor, const ActionFrame& frame, const Sequence& s,
    bool contextual, std::uint64_t seed, const std::string& sanctioner_id,
    Valence valence, int count) {
  CertificationReport report;
  report.procedure = "sanction";
  const Sequence& a = frame.candidates[frame.target];
  const auto pin = contextual ? frame_pin(frame) : std::nullopt;

  try {
    const ClassProbs before = action_class_prob(actor, frame, pin, mix_seed(seed, 1));
    const Memory edited =
        insert_sanction(actor.memory(), actor.backend(), a, sanctioner_id, s, count,
                        frame.epsilon, mix_seed(seed, 2));
    Actor ghost = actor;
    ghost.set_memory(edited);
    const ClassProbs after = action_class_prob(ghost, frame, pin, mix_seed(seed, 3));

    const double pb = before.by_class[frame.target_class()];
    const double pa = after.by_class[frame.target_class()];
    const bool exact = before.exact && after.exact;
    const double margin = require_margin(exact, before.std_error + after.std_error);
    Inequality q;
    if (valence == Valence::negative) {
      q = {"p(a|sanctioned) < p(a|orig)", pa, pb, pa + margin < pb};
    } else {
      q = {"p(a|sanctioned) > p(a|orig)", pb, pa, pb + margin < pa};
    }
    report.inequalities.push_back(q);
    report.estimator_error = std::max(before.std_error, after.std_error);
    if (q.holds) {
      report.verdict = Verdict::certified;
    } else if (exact) {
      report.verdict = Verdict::refuted;
    } else {
      report.verdict = Verdict::inconclusive;
      report.detail = "Monte-Carlo margin insufficient";
    }
  } catch (const NoMatchingRecords& e) {
    report.verdict = Verdict::inconclusive;
    report.detail = e.what();
  } catch (const InsufficientMatches& e) {
    report.verdict = Verdict::inconclusive;
    report.detail = e.what();
  }
  return report;
}

double collective_policy_prob(const std::vector<Actor>& actors,
                              const std::vector<std::pair<std::string, Sequence>>& joint,
                              const std::map<std::string, ActionFrame>& frames) {
  if (joint.size() != actors.size()) {
    throw MismatchedActors("joint action must name exactly one action per actor");
  }
  double product = 1.0;
  for (const auto& [id, action] : joint) {
    const Actor* actor = nullptr;
    for (const auto& a : actors) {
      if (a.id() == id) { actor = &a; break; }
    }
    if (!actor) throw MismatchedActors("no actor with id '" + id + "'");
    auto fit = frames.find(id);
    if (fit == frames.end()) throw MismatchedActors("no frame for actor '" + id + "'");
    const ActionFrame& frame = fit->second;
    std::optional<std::size_t> class_id;
    for (std::size_t i = 0; i < frame.candidates.size(); ++i) {
      if (frame.candidates[i] == action) {
        class_id = frame.class_of[i];
        break;
      }
    }
    if (!class_id) {
      throw MismatchedActors("action '" + action.text() + "' is not in the frame for '" +
                             id + "'");
    }
    const ClassProbs probs = action_class_prob(*actor, frame, frame_pin(frame));
    product *= probs.by_class[*class_id];
  }
  return product;
}

double collective_policy_prob(
    const std::vector<Actor>& actors,
    const std::vector<std::vector<std::pair<std::string, Sequence>>>& joints_over_time,
    const std::map<std::string, ActionFrame>& frames) {
  double product = 1.0;
  for (const auto& joint : joints_over_time) {
    product *= collective_policy_prob(actors, joint, frames);
  }
  return product;
}

std::string NormClassification::to_json() const {
  nlohmann::json j;
  j["schema"] = "normlab.norm.v1";
  j["normative"] = normative;
  j["narrow_scope_convention"] = narrow_scope_convention;
  j["scope"] = scope;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [id, ok] : per_actor) per[id] = ok;
  j["per_actor"] = per;
  j["detail"] = detail;
  return j.dump(2);
}

NormClassification classify_normative(const std::vector<Actor>& population,
                                      const ActionFrame& sanction_frame,
                                      double reproduction_rate,
                                      const std::vector<double>& f_grid,
                                      double generic_threshold, std::uint64_t seed) {
  if (population.size() < 2) throw ConfigError("population must have >= 2 actors");
  NormClassification out;
  const Sequence& sanction = sanction_frame.candidates[sanction_frame.target];

  for (std::size_t i = 0; i < population.size(); ++i) {
    const Actor& actor = population[i];
    bool reproduces = false;
    try {
      reproduces = certify_reproduction(actor, sanction_frame, reproduction_rate,
                                        f_grid, mix_seed(seed, i))
                       .reproduced;
    } catch (const Error&) {
      reproduces = false;
    }
    if (!reproduces) {
      out.per_actor[actor.id()] = false;
      continue;
    }
    // Conveyance: some other actor holds a record of this actor sanctioning.
    bool conveyed = false;
    for (const auto& other : population) {
      if (other.id() == actor.id()) continue;
      for (const auto& entry : other.memory().entries) {
        const auto rec = parse_record(entry.text());
        if (!rec || rec->clauses.empty()) continue;
        for (const auto& [cid, act] : rec->clauses) {
          if (cid == actor.id() && act == sanction) {
            conveyed = true;
            break;
          }
        }
        if (conveyed) break;
      }
      if (conveyed) break;
    }
    out.per_actor[actor.id()] = conveyed;
    if (conveyed) out.scope.push_back(actor.id());
  }

  const double needed = generic_threshold * static_cast<double>(population.size());
  out.normative = static_cast<double>(out.scope.size()) + 1e-12 >= needed;
  out.narrow_scope_convention = !out.normative && !out.scope.empty();
  out.detail = std::to_string(out.scope.size()) + " of " +
               std::to_string(population.size()) +
               " actors reproduce and convey the sanctioning pattern";
  return out;
}

}  // namespace normlab
