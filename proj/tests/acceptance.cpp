// Acceptance suite: runs every acceptance criterion end to end and prints
// one PASS/FAIL line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "normlab/certify.hpp"
#include "normlab/errors.hpp"
#include "normlab/experiments.hpp"
#include "normlab/lmae.hpp"
#include "normlab/prefs.hpp"
#include "normlab/remote.hpp"
#include "remote_stub.hpp"

using namespace normlab;

namespace {

#define EXPECT(cond, msg)                                   \
  do {                                                      \
    if (!(cond)) throw std::runtime_error(std::string(msg)); \
  } while (0)

struct Harness {
  int failures = 0;

  void criterion(int n, const std::string& name, const std::function<void()>& body) {
    try {
      body();
      std::printf("PASS  criterion %2d: %s\n", n, name.c_str());
    } catch (const std::exception& e) {
      ++failures;
      std::printf("FAIL  criterion %2d: %s  [%s]\n", n, name.c_str(), e.what());
    }
    std::fflush(stdout);
  }
};

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::string scenario_path(const std::string& name) {
  return std::string(NORMLAB_SCENARIO_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT(static_cast<bool>(in), "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

SummaryChain plain_chain() {
  SummaryChain chain;
  chain.steps.push_back(
      {ChainStep::Kind::retrieve, {"{observation}", FramingKind::query}, 0});
  chain.policy = {kDefaultPolicyTemplate, FramingKind::policy};
  chain.memorize = {"", FramingKind::memorize};
  return chain;
}

// Independent bigram counting oracle (the dumb way, kept separate from the
// backend implementation on purpose).
struct BigramOracle {
  std::map<std::string, std::map<std::string, double>> counts;

  explicit BigramOracle(const Corpus& corpus) {
    for (const auto& e : corpus.entries) {
      std::string prev = "<s>";
      for (const auto& tok : e.tokens()) {
        counts[prev][tok] += 1;
        prev = tok;
      }
      counts[prev]["</s>"] += 1;
    }
  }

  double prob(const std::string& last, const std::string& tok, double lambda,
              std::size_t vocab_size) const {
    double total = 0.0, c = 0.0;
    auto it = counts.find(last);
    if (it != counts.end()) {
      for (const auto& [t, n] : it->second) total += n;
      auto jt = it->second.find(tok);
      if (jt != it->second.end()) c = jt->second;
    }
    return (c + lambda) / (total + lambda * (static_cast<double>(vocab_size) + 1.0));
  }
};

// The count-ratio closed form for the greeting frame (N precedents, E of
// them rewritten to the three-token alternative, smoothing l, vocabulary V).
std::pair<double, double> greeting_closed_form(int N, int E, double l, double V) {
  const double d1 = N + l * (V + 1.0);
  const double d2 = E + l * (V + 1.0);
  const double wh = (N - E + l) / d1;
  const double wd = ((E + l) / d1) * std::pow((E + l) / d2, 2.0);
  return {wh / (wh + wd), wd / (wh + wd)};
}

double frame_vocab_size(const Actor& actor, const ActionFrame& frame) {
  const Sequence ctx =
      actor.policy_context(frame.observation, std::nullopt, &frame.candidates);
  std::set<std::string> vocab = {"RULE", "avoid", "prefer", "options"};
  for (const auto& s : actor.backend().config().negative_sanctions) {
    for (const auto& t : s.tokens()) vocab.insert(t);
  }
  for (const auto& s : actor.backend().config().positive_sanctions) {
    for (const auto& t : s.tokens()) vocab.insert(t);
  }
  for (const auto& t : ctx.tokens()) vocab.insert(t);
  return static_cast<double>(vocab.size());
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NORMLAB_CLI_PATH) + " " + args + " 2>/dev/null";
  return std::system(cmd.c_str());
}

// --- criteria ---------------------------------------------------------------

void criterion_kl_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240801);
  std::vector<std::string> words;
  for (int i = 0; i < 50; ++i) words.push_back("w" + std::to_string(i));
  std::uniform_int_distribution<int> vocab_size(3, 50), entries(2, 10), len(1, 6);

  for (int trial = 0; trial < 100; ++trial) {
    const int v = vocab_size(rng);
    std::uniform_int_distribution<int> pick(0, v - 1);
    Corpus corpus;
    for (int e = 0, n = entries(rng); e < n; ++e) {
      std::vector<std::string> toks;
      for (int k = 0, L = len(rng); k < L; ++k) toks.push_back(words[pick(rng)]);
      corpus.entries.push_back(Sequence(toks));
    }
    BackendConfig cfg;
    cfg.kind = BackendKind::table;
    cfg.ngram_order = 2;
    cfg.smoothing_lambda = 0.5;
    CountBackend backend(cfg, corpus);
    BigramOracle oracle(corpus);

    const Sequence c1 = corpus.entries[trial % corpus.entries.size()];
    const Sequence c2 = corpus.entries[(trial + 1) % corpus.entries.size()];
    // The documented active vocabulary for both contexts.
    auto active = [&](const Sequence& ctx) {
      std::set<std::string> vv = {"RULE", "avoid", "prefer", "options"};
      for (const auto& e : corpus.entries) {
        for (const auto& t : e.tokens()) vv.insert(t);
      }
      for (const auto& t : ctx.tokens()) vv.insert(t);
      return vv;
    };
    const auto active1 = active(c1);
    const auto active2 = active(c2);

    double expect = 0.0;
    std::set<std::string> support = active1;
    support.insert("</s>");
    for (const auto& tok : support) {
      const double p = oracle.prob(c1.tokens().back(), tok, 0.5, active1.size());
      const double q = oracle.prob(c2.tokens().back(), tok, 0.5, active2.size());
      if (p > 0.0) expect += p * std::log(p / q);
    }
    const KlResult got = backend.kl_divergence(c1, c2);
    EXPECT(got.exact, "table backend KL must be exact");
    EXPECT(std::abs(got.value - expect) < 1e-9,
           "KL mismatch vs brute-force oracle: got " + std::to_string(got.value) +
               " expected " + std::to_string(expect));
  }
  EXPECT(seconds_since(start) < 5.0, "criterion 1 exceeded the 5 s budget");
}

void criterion_epsilon() {
  BackendConfig cfg;
  cfg.kind = BackendKind::table;
  cfg.ngram_order = 2;
  cfg.smoothing_lambda = 0.5;
  Corpus corpus;
  for (const char* line : {"hello there friend", "hi there friend", "hello again",
                           "hi again", "goodbye now", "goodbye forever"}) {
    corpus.entries.push_back(Sequence::tokenize(line));
  }
  CountBackend backend(cfg, corpus);
  const Sequence ctx = Sequence::tokenize("someone says hello");

  for (const double eps : {1e-12, 1e-6, 0.1, 1.0, 100.0}) {
    EXPECT(epsilon_similar(backend, Sequence::tokenize("hello"),
                           Sequence::tokenize("hello"), ctx, eps),
           "reflexivity failed at eps=" + std::to_string(eps));
  }
  const auto same = epsilon_similar_detail(backend, Sequence::tokenize("hello"),
                                           Sequence::tokenize("hi"), ctx, 1e-6);
  EXPECT(same.kl == 0.0, "symmetric construction must give exactly zero KL");
  EXPECT(same.similar, "symmetric construction must be similar at 1e-6");
  const auto diff = epsilon_similar_detail(backend, Sequence::tokenize("hello"),
                                           Sequence::tokenize("goodbye"), ctx, 0.1);
  EXPECT(diff.kl > 0.1, "divergent construction must exceed eps=0.1");
  EXPECT(!diff.similar, "divergent construction must not be similar");
}

void criterion_convention() {
  const auto start = std::chrono::steady_clock::now();
  Engine engine(Scenario::load(scenario_path("greeting.json")));
  const auto actors = engine.build_actors();
  const std::vector<double> grid = {0.25, 0.5, 0.75, 1.0};

  for (const std::string id : {"p1", "w1"}) {  // table and weighted kinds
    const Actor* actor = nullptr;
    for (const auto& a : actors) {
      if (a.id() == id) actor = &a;
    }
    EXPECT(actor != nullptr, "greeting scenario must define actor " + id);
    const ActionFrame frame = build_action_frame(
        actor->backend(), Sequence(), Sequence::tokenize("the phone is ringing"),
        {Sequence::tokenize("hello"), Sequence::tokenize("duck duck duck")}, 0.1, 0,
        1);
    const auto report = certify_convention_sensitivity(*actor, frame, grid, 11);
    EXPECT(report.verdict == Verdict::certified,
           id + ": expected certified, got " + to_string(report.verdict));

    const double V = frame_vocab_size(*actor, frame);
    double prev = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const int edits = static_cast<int>(std::ceil(grid[i] * 20.0));
      EXPECT(report.grid[i].edits == edits, id + ": unexpected edit count");
      const auto closed = greeting_closed_form(20, edits, 0.5, V);
      EXPECT(std::abs(report.grid[i].p_alternative - closed.second) < 1e-9,
             id + ": p(a') deviates from the count-ratio closed form");
      EXPECT(std::abs(report.grid[i].p_target - closed.first) < 1e-9,
             id + ": p(a) deviates from the count-ratio closed form");
      EXPECT(report.grid[i].p_alternative > prev,
             id + ": p(a') must strictly increase along the grid");
      prev = report.grid[i].p_alternative;
    }
  }
  EXPECT(seconds_since(start) < 10.0, "criterion 3 exceeded the 10 s budget");
}

void criterion_sanction_controls() {
  Engine engine(Scenario::load(scenario_path("greeting.json")));
  const auto actors = engine.build_actors();
  const Sequence shame = Sequence::tokenize("shame on you");

  auto frame_for = [&](const Actor& a) {
    return build_action_frame(a.backend(), Sequence(),
                              Sequence::tokenize("the phone is ringing"),
                              {Sequence::tokenize("hello"),
                               Sequence::tokenize("duck duck duck")},
                              0.1, 0, 1);
  };
  const Actor* table = nullptr;
  const Actor* weighted = nullptr;
  for (const auto& a : actors) {
    if (a.id() == "p1") table = &a;
    if (a.id() == "w1") weighted = &a;
  }
  const auto certified =
      certify_sanction_sensitivity(*weighted, frame_for(*weighted), shame, false,
                                   19, "k1");
  EXPECT(certified.verdict == Verdict::certified,
         "weighted kind must certify sanction sensitivity, got " +
             to_string(certified.verdict));
  const auto refuted =
      certify_sanction_sensitivity(*table, frame_for(*table), shame, false, 19, "k1");
  EXPECT(refuted.verdict == Verdict::refuted,
         "table kind must be refuted (negative control), got " +
             to_string(refuted.verdict));
}

void criterion_collective() {
  BackendConfig cfg;
  cfg.kind = BackendKind::table;
  cfg.ngram_order = 2;
  cfg.smoothing_lambda = 0.0;
  Corpus separator;
  separator.entries.push_back(Sequence::tokenize("yes indeed"));
  separator.entries.push_back(Sequence::tokenize("no never"));
  auto backend = std::make_shared<CountBackend>(cfg, separator);

  std::vector<Actor> actors;
  std::map<std::string, ActionFrame> frames;
  std::vector<std::pair<std::string, Sequence>> joint;
  for (int i = 0; i < 8; ++i) {
    Memory m;
    for (int k = 0; k < 9; ++k) {
      m.append(Sequence::tokenize("[the signal comes, x:yes]"));
    }
    m.append(Sequence::tokenize("[the signal comes, x:no]"));
    const std::string id = "actor" + std::to_string(i);
    actors.emplace_back(id, backend, plain_chain(), m);
    frames.emplace(id, build_action_frame(*backend, Sequence(),
                                          Sequence::tokenize("the signal comes"),
                                          {Sequence::tokenize("yes"),
                                           Sequence::tokenize("no")},
                                          0.1, 0, 1));
    joint.emplace_back(id, Sequence::tokenize("yes"));
  }

  const std::vector<Actor> one(actors.begin(), actors.begin() + 1);
  const double single =
      collective_policy_prob(one, {{"actor0", Sequence::tokenize("yes")}}, frames);
  const double individual =
      action_class_prob(actors[0], frames.at("actor0"), std::nullopt).by_class[0];
  EXPECT(single == individual, "single-actor collective must equal the individual");

  double manual = 1.0;
  for (const auto& a : actors) {
    manual *= action_class_prob(a, frames.at(a.id()), std::nullopt).by_class[0];
  }
  const double collective = collective_policy_prob(actors, joint, frames);
  EXPECT(std::abs(collective - manual) < 1e-12,
         "8-actor product deviates from the per-factor recomputation");
  EXPECT(std::abs(collective - 0.43046721) < 1e-9,
         "0.9^8 must reproduce 0.43046721, got " + std::to_string(collective));
}

void criterion_norm_classification() {
  BackendConfig cfg;
  cfg.kind = BackendKind::weighted;
  cfg.ngram_order = 2;
  cfg.smoothing_lambda = 0.5;
  cfg.sanction_discount = 0.5;
  cfg.negative_sanctions = {Sequence::tokenize("shame on you")};
  auto backend = std::make_shared<CountBackend>(cfg);

  const Sequence witness = Sequence::tokenize("someone chose duck duck duck");
  const Sequence shame = Sequence::tokenize("shame on you");
  const Sequence pass = Sequence::tokenize("look away");
  auto population = [&](int sanctioners) {
    std::vector<Actor> pop;
    for (int i = 0; i < 8; ++i) {
      Memory m;
      if (i < sanctioners) {
        for (int j = 0; j < sanctioners; ++j) {
          if (j == i) continue;
          const std::string rec =
              make_record(witness, "s" + std::to_string(j), shame).serialize();
          m.append(Sequence::tokenize(rec));
          m.append(Sequence::tokenize(rec));
        }
        m.append(Sequence::tokenize(
            make_record(witness, "s" + std::to_string(i), shame).serialize()));
        m.append(Sequence::tokenize(make_record(witness, "p", pass).serialize()));
      }
      pop.emplace_back("s" + std::to_string(i), backend, plain_chain(), m);
    }
    return pop;
  };
  const ActionFrame frame =
      build_action_frame(*backend, Sequence(), witness, {shame, pass}, 0.1, 0, 1);
  const std::vector<double> grid = {0.25, 0.5, 0.75, 1.0};

  const auto generic = classify_normative(population(8), frame, 0.5, grid, 0.9, 23);
  EXPECT(generic.normative, "8/8 sanctioners must classify as normative");
  const auto narrow = classify_normative(population(2), frame, 0.5, grid, 0.9, 23);
  EXPECT(!narrow.normative, "2/8 sanctioners must not be normative at 0.9");
  EXPECT(narrow.narrow_scope_convention,
         "2/8 sanctioners must be reported as a narrow-scope convention");
  EXPECT(narrow.scope.size() == 2, "narrow scope must list exactly the two actors");
}

void criterion_consolidation_lesion() {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = ExperimentConfig::load(
      scenario_path("experiment_consolidation.json"));
  const MetricsTable table = consolidation_lesion(cfg, cfg.seeds[0]);
  const double pre = *table.lookup(cfg.seeds[0], 0.0, "tv_pre_consolidation");
  const double post = *table.lookup(cfg.seeds[0], 0.0, "tv_post_consolidation");
  EXPECT(pre > 0.1, "pre-consolidation lesion must shift TV > 0.1, got " +
                        std::to_string(pre));
  EXPECT(post < 0.01, "post-consolidation lesion must shift TV < 0.01, got " +
                          std::to_string(post));
  EXPECT(*table.lookup(cfg.seeds[0], 0.0, "tv_virtual_lesion_identity") == 0.0,
         "consolidate-once-then-delete must match in-context behavior exactly");
  EXPECT(seconds_since(start) < 5.0, "criterion 7 exceeded the 5 s budget");
}

void criterion_explicit_implicit() {
  const Sequence o = Sequence::tokenize("fruit bowl on the table");
  const Sequence rule = Sequence::tokenize("RULE : avoid take the apple");
  const std::vector<Sequence> candidates = {Sequence::tokenize("take the apple"),
                                            Sequence::tokenize("take the banana")};
  Corpus corpus;
  for (int i = 0; i < 6; ++i) {
    corpus.entries.push_back(
        Sequence::tokenize("[fruit bowl on the table, m:take the apple]"));
  }
  for (int i = 0; i < 2; ++i) {
    corpus.entries.push_back(
        Sequence::tokenize("[fruit bowl on the table, m:take the banana]"));
  }

  auto probs = [&](const Actor& a) {
    const ActionFrame frame =
        declared_action_frame(Sequence(), o, candidates, 0.1, 0, 1);
    return action_class_prob(a, frame, std::nullopt).by_class;
  };

  // Cell 1: the rule flips the choice under the weighted kind.
  BackendConfig wcfg;
  wcfg.kind = BackendKind::weighted;
  wcfg.ngram_order = 2;
  wcfg.smoothing_lambda = 0.5;
  wcfg.rule_discount = 0.1;
  auto weighted = std::make_shared<CountBackend>(wcfg, corpus);
  Actor wa("Alice", weighted, plain_chain(), Memory{});
  const auto baseline = probs(wa);
  EXPECT(baseline[0] > baseline[1], "precedent must favor the apple");
  wa.inject_explicit_norm(rule);
  const auto ruled = probs(wa);
  EXPECT(ruled[0] < ruled[1], "the avoid-rule must flip the choice under (b)");

  // Cell 2: exactly zero effect under the table kind.
  BackendConfig tcfg = wcfg;
  tcfg.kind = BackendKind::table;
  auto table = std::make_shared<CountBackend>(tcfg, corpus);
  Actor ta("Alice", table, plain_chain(), Memory{});
  const auto t_base = probs(ta);
  ta.inject_explicit_norm(rule);
  const auto t_ruled = probs(ta);
  EXPECT(t_base[0] == t_ruled[0] && t_base[1] == t_ruled[1],
         "the rule must have exactly zero effect under (a)");

  // Cell 3: removing the rule before consolidation restores behavior exactly.
  wa.remove_explicit_norm(rule);
  const auto removed = probs(wa);
  EXPECT(removed[0] == baseline[0] && removed[1] == baseline[1],
         "removal before consolidation must restore the exact distribution");

  // Cell 4: after consolidating rule-compliant records, the effect persists
  // without the rule in context.
  Corpus compliant;
  for (int i = 0; i < 30; ++i) {
    compliant.entries.push_back(
        Sequence::tokenize("[fruit bowl on the table, m:take the banana]"));
  }
  weighted->consolidate(compliant);
  const auto post = probs(wa);  // no pinned rule anymore
  EXPECT(post[1] > post[0],
         "consolidated compliance must persist after rule removal");
}

void criterion_polarization() {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg =
      ExperimentConfig::load(scenario_path("experiment_polarization.json"));
  const MetricsTable top = polarization_metrics(cfg, 1);
  const double a1 = *top.lookup(1, 0.0, "p_a1");
  const double a2 = *top.lookup(1, 0.0, "p_a2");
  const double a3 = *top.lookup(1, 0.0, "p_a3");
  EXPECT(a1 > a2 && a3 > a2, "top-only learner must rank a1 and a3 above a2");
  EXPECT(a2 <= std::min(a1, a3), "p(a2) must be minimal under top-only");

  ExperimentConfig full = cfg;
  full.polarization.transmit = TransmitMode::full_relation;
  const MetricsTable rel = polarization_metrics(full, 1);
  EXPECT(*rel.lookup(1, 0.0, "p_a2") > a2,
         "full-relation transmission must strictly raise p(a2) at the same seed");
  EXPECT(seconds_since(start) < 10.0, "criterion 9 exceeded the 10 s budget");
}

void criterion_conjectures() {
  const auto start = std::chrono::steady_clock::now();

  // Norm stability at the bundled default (N=8, T=50).
  ExperimentConfig stability =
      ExperimentConfig::load(scenario_path("experiment_stability.json"));
  const MetricsTable st = norm_stability(stability, stability.seeds[0]);
  const auto compliance = st.series(stability.seeds[0], "compliance");
  EXPECT(compliance.size() == 50, "stability must run 50 ticks");
  for (const double c : compliance) {
    EXPECT(c >= compliance.front() - 0.05,
           "compliance fell more than 0.05 below its initial level");
  }
  // Ablation: discount 1 makes sanctions inert; the lift disappears.
  ExperimentConfig flat = stability;
  flat.backend.sanction_discount = 1.0;
  const auto ablated =
      norm_stability(flat, flat.seeds[0]).series(flat.seeds[0], "compliance");
  EXPECT(compliance.back() - ablated.back() > 0.15,
         "disabling sanction weight must remove the compliance lift");

  // Norm adoption: the newcomer exceeds 0.8 by tick 30.
  ExperimentConfig adoption =
      ExperimentConfig::load(scenario_path("experiment_adoption.json"));
  const MetricsTable ad = norm_adoption(adoption, adoption.seeds[0]);
  const auto newcomer = ad.series(adoption.seeds[0], "newcomer_compliance");
  EXPECT(newcomer.size() >= 31, "adoption must run at least 31 ticks");
  EXPECT(newcomer[30] > 0.8, "newcomer compliance must exceed 0.8 by tick 30, got " +
                                 std::to_string(newcomer[30]));
  // Ablation: flip the population's convention; the measured adoption of the
  // reference norm disappears (the newcomer adopts the flipped one).
  ExperimentConfig flipped = adoption;
  std::swap(flipped.seed_norm, flipped.seed_violation);
  flipped.seed_norm = 0;
  flipped.seed_violation = 8;
  flipped.sanctions_enabled = false;
  const auto contrary =
      norm_adoption(flipped, flipped.seeds[0]).series(flipped.seeds[0],
                                                      "newcomer_compliance");
  EXPECT(contrary[30] < 0.2,
         "with the population convention flipped, reference-norm adoption must "
         "disappear");

  EXPECT(seconds_since(start) < 60.0, "criterion 10 exceeded the 60 s budget");
}

void criterion_determinism() {
  // Byte-identical CLI outputs for identical (config, seed).
  const std::string trace_a = "/tmp/normlab_accept_trace_a.jsonl";
  const std::string trace_b = "/tmp/normlab_accept_trace_b.jsonl";
  EXPECT(run_cli("run --scenario " + scenario_path("greeting.json") +
                 " --seed 2024 --ticks 8 --out " + trace_a) == 0,
         "run command failed");
  EXPECT(run_cli("run --scenario " + scenario_path("greeting.json") +
                 " --seed 2024 --ticks 8 --out " + trace_b) == 0,
         "run command failed");
  EXPECT(slurp(trace_a) == slurp(trace_b), "traces differ across identical runs");

  const std::string metrics_a = "/tmp/normlab_accept_metrics_a.csv";
  const std::string metrics_b = "/tmp/normlab_accept_metrics_b.csv";
  EXPECT(run_cli("experiment consolidation-lesion --config " +
                 scenario_path("experiment_consolidation.json") + " --out " +
                 metrics_a) == 0,
         "experiment command failed");
  EXPECT(run_cli("experiment consolidation-lesion --config " +
                 scenario_path("experiment_consolidation.json") + " --out " +
                 metrics_b) == 0,
         "experiment command failed");
  EXPECT(slurp(metrics_a) == slurp(metrics_b),
         "metrics differ across identical runs");

  const std::string report_a = "/tmp/normlab_accept_report_a.json";
  const std::string report_b = "/tmp/normlab_accept_report_b.json";
  EXPECT(run_cli("certify convention --scenario " + scenario_path("greeting.json") +
                 " --actor p1 --frame " + scenario_path("greeting_frame.json") +
                 " --seed 5 --out " + report_a) == 0,
         "certify command failed");
  EXPECT(run_cli("certify convention --scenario " + scenario_path("greeting.json") +
                 " --actor p1 --frame " + scenario_path("greeting_frame.json") +
                 " --seed 5 --out " + report_b) == 0,
         "certify command failed");
  EXPECT(slurp(report_a) == slurp(report_b),
         "reports differ across identical runs");

  // Within-tick evaluation order never changes the trace.
  Engine engine(Scenario::load(scenario_path("greeting.json")));
  const Trace forward = engine.run_episode(31, 8);
  std::vector<std::size_t> reversed;
  for (std::size_t i = engine.scenario().actors.size(); i-- > 0;) {
    reversed.push_back(i);
  }
  const Trace backward = engine.run_episode(31, 8, Verbosity::actions, reversed);
  EXPECT(forward.to_jsonl() == backward.to_jsonl(),
         "permuting actor evaluation order changed the trace");
}

void criterion_remote() {
  using normlab::testing::StubServer;
  StubServer stub;
  stub.tables["ctx one"] = {{"a", 0.7}, {"b", 0.3}};
  stub.tables["ctx two"] = {{"a", 0.4}, {"b", 0.6}};
  stub.tables[""] = {{"hello", 0.52}, {"waves", 0.48}};
  const std::string endpoint = stub.start();

  BackendConfig cfg;
  cfg.kind = BackendKind::remote;
  cfg.endpoint = endpoint;
  cfg.mc_samples = 256;
  cfg.max_retries = 3;
  auto backend = std::make_shared<RemoteBackend>(cfg);

  // Request schema: the stub validates every field.
  backend->sample_completion(Sequence::tokenize("ctx one"), 1, 7);
  EXPECT(stub.schema_errors().empty(), "request schema violations recorded");

  // Retry on 5xx.
  stub.requests_seen = 0;
  stub.fail_first = 2;
  backend->sample_completion(Sequence::tokenize("ctx one"), 1, 7);
  EXPECT(stub.requests_seen.load() == 3, "client must retry injected 503s");
  stub.fail_first = 0;

  // Monte-Carlo KL returns a value with a standard error, never exact.
  const double exact = 0.7 * std::log(0.7 / 0.4) + 0.3 * std::log(0.3 / 0.6);
  const KlResult kl = backend->kl_divergence(Sequence::tokenize("ctx one"),
                                             Sequence::tokenize("ctx two"));
  EXPECT(!kl.exact, "remote KL must be flagged as an estimate");
  EXPECT(kl.std_error > 0.0, "remote KL must report a standard error");
  EXPECT(std::abs(kl.value - exact) < 5.0 * kl.std_error + 0.02,
         "remote KL estimate too far from the exact value");

  // The certifier downgrades to inconclusive when the margin is insufficient.
  Memory m;
  for (int i = 0; i < 4; ++i) {
    m.append(Sequence::tokenize("[the phone rings, k" + std::to_string(i) +
                                ":hello]"));
  }
  Actor actor("Alice", backend, plain_chain(), m);
  const ActionFrame frame = declared_action_frame(
      Sequence(), Sequence::tokenize("the phone rings"),
      {Sequence::tokenize("hello"), Sequence::tokenize("waves")}, 0.1, 0, 1);
  const auto report = certify_sanction_sensitivity(
      actor, frame, Sequence::tokenize("shame on you"), false, 7, "k1");
  EXPECT(report.verdict == Verdict::inconclusive,
         "noise-level differences must downgrade to inconclusive, got " +
             to_string(report.verdict));
}

}  // namespace

int main() {
  Harness h;
  h.criterion(1, "KL oracle equivalence (100 random backends, < 5 s)",
              criterion_kl_oracle);
  h.criterion(2, "epsilon-similarity reflexivity and constructions",
              criterion_epsilon);
  h.criterion(3, "convention-sensitivity certification (greeting, < 10 s)",
              criterion_convention);
  h.criterion(4, "sanction-sensitivity positive and negative controls",
              criterion_sanction_controls);
  h.criterion(5, "collective policy products", criterion_collective);
  h.criterion(6, "norm classification: generic vs narrow scope",
              criterion_norm_classification);
  h.criterion(7, "consolidation / virtual lesion (< 5 s)",
              criterion_consolidation_lesion);
  h.criterion(8, "explicit vs implicit norms (four cells, exact)",
              criterion_explicit_implicit);
  h.criterion(9, "polarization from top-choice transmission (< 10 s)",
              criterion_polarization);
  h.criterion(10, "norm stability and adoption conjectures (< 60 s)",
              criterion_conjectures);
  h.criterion(11, "byte-identical determinism and order invariance",
              criterion_determinism);
  h.criterion(12, "remote backend wire-protocol conformance", criterion_remote);

  if (h.failures == 0) {
    std::printf("acceptance: all 12 criteria passed\n");
  } else {
    std::printf("acceptance: %d criterion(s) FAILED\n", h.failures);
  }
  return h.failures;
}
