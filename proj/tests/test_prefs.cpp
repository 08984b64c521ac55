#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "normlab/errors.hpp"
#include "normlab/prefs.hpp"

using namespace normlab;

namespace {

BackendConfig cfg_of(BackendKind kind, double lambda, int order = 2) {
  BackendConfig cfg;
  cfg.kind = kind;
  cfg.ngram_order = order;
  cfg.smoothing_lambda = lambda;
  return cfg;
}

Corpus records(const std::vector<std::pair<std::string, int>>& entries) {
  Corpus corpus;
  for (const auto& [text, n] : entries) {
    for (int i = 0; i < n; ++i) corpus.entries.push_back(Sequence::tokenize(text));
  }
  return corpus;
}

}  // namespace

TEST_CASE("pairwise elicitation follows influence-keyed precedent") {
  // People pick the banana whenever the allergy assembly is present.
  CountBackend backend(cfg_of(BackendKind::weighted, 0.5),
                       records({{"[Alice is allergic to apples, p:eat the banana]", 6},
                                {"[, p:eat the apple]", 2}}));
  const auto pr = elicit_pairwise(backend, Sequence::tokenize("Alice is allergic to apples"),
                                  Sequence::tokenize("eat the apple"),
                                  Sequence::tokenize("eat the banana"));
  CHECK(pr.direction == -1);  // banana strictly preferred
  CHECK(pr.p0 + pr.p1 == doctest::Approx(1.0).epsilon(1e-12));

  // Without the influence, precedent favors the apple.
  const auto bare = elicit_pairwise(backend, Sequence(),
                                    Sequence::tokenize("eat the apple"),
                                    Sequence::tokenize("eat the banana"));
  CHECK(bare.direction == 1);

  CHECK_THROWS_AS(elicit_pairwise(backend, Sequence(), Sequence::tokenize("x"),
                                  Sequence::tokenize("x")),
                  ConfigError);
}

TEST_CASE("saturated precedent beats the unseen option by the count ratio") {
  CountBackend backend(cfg_of(BackendKind::table, 0.5),
                       records({{"[, p:coffee]", 8}}));
  const auto pr = elicit_pairwise(backend, Sequence(), Sequence::tokenize("tea"),
                                  Sequence::tokenize("coffee"));
  // Weights (8 + l) vs l with l = 0.5: the ratio is exact.
  CHECK(pr.p1 / pr.p0 == doctest::Approx((8.0 + 0.5) / 0.5).epsilon(1e-9));
  CHECK(pr.direction == -1);
}

TEST_CASE("symmetric corpora elicit exactly half and half when symmetrized") {
  CountBackend backend(cfg_of(BackendKind::table, 0.5),
                       records({{"[, p:tea]", 5}, {"[, p:coffee]", 5}}));
  const auto pr = elicit_pairwise(backend, Sequence(), Sequence::tokenize("tea"),
                                  Sequence::tokenize("coffee"), true);
  CHECK(pr.symmetrized);
  CHECK(pr.p0 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pr.p1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pr.direction == 0);  // exact tie: weak edges both ways
}

TEST_CASE("relations are complete, logged, and sized n choose 2") {
  CountBackend backend(cfg_of(BackendKind::table, 0.5),
                       records({{"[, p:a1]", 3}, {"[, p:a2]", 2}, {"[, p:a3]", 1}}));
  const std::vector<Sequence> five = {
      Sequence::tokenize("a1"), Sequence::tokenize("a2"), Sequence::tokenize("a3"),
      Sequence::tokenize("a4"), Sequence::tokenize("a5")};
  const auto rel = elicit_relation(backend, Sequence(), five);
  CHECK(rel.edges.size() == 10);
  CHECK(rel.elicitation_log.size() == 10);
  CHECK(rel.elicitation_log.front() == "a1 vs a2");

  const std::vector<Sequence> two = {Sequence::tokenize("a1"), Sequence::tokenize("a2")};
  const auto base = elicit_relation(backend, Sequence(), two);
  const auto pr = elicit_pairwise(backend, Sequence(), two[0], two[1]);
  CHECK(base.edges.size() == 1);
  CHECK(base.edges[0].p_i == pr.p0);
  CHECK(base.edges[0].direction == pr.direction);

  CHECK_THROWS_AS(elicit_relation(backend, Sequence(), {two[0]}), ConfigError);
}

TEST_CASE("pairwise and ranking views of a decoy-biased backend disagree") {
  // A visible decoy t flips the choice toward s; pairwise menus never show t.
  CountBackend backend(cfg_of(BackendKind::weighted, 0.5),
                       records({{"[t, p:s]", 10}, {"[, p:r]", 3}, {"[, p:s]", 2}}));
  const std::vector<Sequence> items = {Sequence::tokenize("r"), Sequence::tokenize("s"),
                                       Sequence::tokenize("t")};
  const auto pairwise = elicit_pairwise(backend, Sequence(), items[0], items[1]);
  CHECK(pairwise.direction == 1);  // r over s head-to-head

  const auto ranking = elicit_ranking(backend, Sequence(), items);
  CHECK(ranking.order.front() == 1);  // s tops the full menu
  // The discrepancy is reported, not reconciled: both results stand.
  CHECK(pairwise.p0 > pairwise.p1);
  CHECK(ranking.probs[1] > ranking.probs[0]);
}

TEST_CASE("vacation identities produce exactly one three-cycle") {
  // beach > mountains (health), mountains > culture (adventure),
  // culture > beach (intellect): encoded as context-free precedent counts
  // per pair via observation-keyed records naming the visible pair.
  CountBackend backend(
      cfg_of(BackendKind::weighted, 0.5),
      records({{"[beach mountains, p:beach]", 5},
               {"[mountains culture, p:mountains]", 5},
               {"[beach culture, p:culture]", 5}}));
  const std::vector<Sequence> items = {Sequence::tokenize("beach"),
                                       Sequence::tokenize("mountains"),
                                       Sequence::tokenize("culture")};
  const auto rel = elicit_relation(backend, Sequence(), items);
  CHECK(rel.strictly_prefers(0, 1));
  CHECK(rel.strictly_prefers(1, 2));
  CHECK(rel.strictly_prefers(2, 0));

  const auto cycles = detect_cycles(rel);
  REQUIRE(cycles.size() == 1);
  CHECK(cycles[0] == std::vector<std::size_t>{0, 1, 2});

  // Brute-force triple scan agrees.
  int expected = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (i < j && i < k && j != k && rel.strictly_prefers(i, j) &&
            rel.strictly_prefers(j, k) && rel.strictly_prefers(k, i)) {
          ++expected;
        }
      }
    }
  }
  CHECK(static_cast<int>(cycles.size()) == expected);
}

TEST_CASE("transitive relations have no cycles and detection is equivariant") {
  CountBackend backend(cfg_of(BackendKind::table, 0.5),
                       records({{"[, p:a1]", 9}, {"[, p:a2]", 5}, {"[, p:a3]", 1}}));
  const std::vector<Sequence> items = {Sequence::tokenize("a1"), Sequence::tokenize("a2"),
                                       Sequence::tokenize("a3")};
  const auto rel = elicit_relation(backend, Sequence(), items);
  CHECK(detect_cycles(rel).empty());

  // Relabeling items permutes reported cycles but never their count. Pair
  // precedents are stored in both presentation orders so the menu order
  // induced by the relabeling cannot unkey them.
  CountBackend cyclic(
      cfg_of(BackendKind::weighted, 0.5),
      records({{"[x y, p:x]", 5}, {"[y x, p:x]", 5},
               {"[y z, p:y]", 5}, {"[z y, p:y]", 5},
               {"[x z, p:z]", 5}, {"[z x, p:z]", 5}}));
  for (const auto& perm :
       std::vector<std::vector<std::string>>{{"x", "y", "z"}, {"z", "x", "y"}}) {
    std::vector<Sequence> permuted;
    for (const auto& t : perm) permuted.push_back(Sequence::tokenize(t));
    const auto r = elicit_relation(cyclic, Sequence(), permuted);
    CHECK(detect_cycles(r).size() == 1);
  }
}

TEST_CASE("iia violations are found exactly where a decoy flips a pair") {
  CountBackend backend(cfg_of(BackendKind::weighted, 0.5),
                       records({{"[t, p:s]", 10}, {"[, p:r]", 3}, {"[, p:s]", 2}}));
  const std::vector<Sequence> items = {Sequence::tokenize("r"), Sequence::tokenize("s"),
                                       Sequence::tokenize("t")};
  const std::vector<std::vector<std::size_t>> menus = {{0, 1}, {0, 1, 2}};
  const auto violations = check_iia(backend, Sequence(), items, menus);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].item_x == 0);
  CHECK(violations[0].item_y == 1);
  CHECK(violations[0].p_x_small > violations[0].p_y_small);
  CHECK(violations[0].p_x_big < violations[0].p_y_big);

  // A menu-indifferent backend (nothing trained) yields no violations.
  CountBackend blank(cfg_of(BackendKind::table, 0.5));
  CHECK(check_iia(blank, Sequence(), items, menus).empty());

  // Menu lists without a singleton-difference pair are rejected.
  CHECK_THROWS_AS(check_iia(backend, Sequence(), items, {{0, 1}, {1, 2}}), ConfigError);
  CHECK_THROWS_AS(check_iia(backend, Sequence(), items, {{0}, {0, 1}}), ConfigError);
}

TEST_CASE("top-only transmission polarizes toward the observed extremes") {
  const Sequence a1 = Sequence::tokenize("a1");
  const Sequence a2 = Sequence::tokenize("a2");
  const Sequence a3 = Sequence::tokenize("a3");
  // The four-identity pattern: two identities on each extreme, all of them
  // privately ranking the intermediate above the opposite extreme.
  const std::vector<std::vector<Sequence>> identities = {
      {a1, a2, a3}, {a3, a2, a1}, {a1, a2, a3}, {a3, a2, a1}};

  PolarizationConfig config;
  config.transmit = TransmitMode::top_only;
  config.trials = 1;
  config.learner = cfg_of(BackendKind::table, 0.5, 1);  // unigram aggregator

  const auto top_only = polarization_experiment(identities, config, 99);
  REQUIRE(top_only.trials.size() == 1);
  const auto& probs = top_only.trials[0].item_probs;
  REQUIRE(probs.size() == 3);
  // Items are sorted lexicographically: a1, a2, a3.
  CHECK(top_only.is_extreme == std::vector<bool>{true, false, true});
  CHECK(probs[0] > probs[1]);
  CHECK(probs[2] > probs[1]);
  CHECK(probs[0] == doctest::Approx(probs[2]).epsilon(1e-12));
  CHECK(top_only.trials[0].bimodality > 0.0);

  // Full-relation transmission strictly raises the intermediate's mass.
  PolarizationConfig full = config;
  full.transmit = TransmitMode::full_relation;
  const auto full_rel = polarization_experiment(identities, full, 99);
  CHECK(full_rel.trials[0].item_probs[1] > probs[1]);

  // The polarization bound: the intermediate never exceeds the extremes.
  CHECK(probs[1] <= std::min(probs[0], probs[2]) + 1e-12);

  // A single identity teaches its own top choice.
  const auto solo = polarization_experiment({{a2, a1, a3}}, config, 7);
  const auto& sp = solo.trials[0].item_probs;
  CHECK(sp[1] > sp[0]);
  CHECK(sp[1] > sp[2]);
}

TEST_CASE("polarization trials are seed-deterministic with sampled speakers") {
  const std::vector<std::vector<Sequence>> identities = {
      {Sequence::tokenize("a1"), Sequence::tokenize("a2"), Sequence::tokenize("a3")},
      {Sequence::tokenize("a3"), Sequence::tokenize("a2"), Sequence::tokenize("a1")}};
  PolarizationConfig config;
  config.transmit = TransmitMode::top_only;
  config.trials = 3;
  config.draws_per_trial = 12;
  config.learner = cfg_of(BackendKind::table, 0.5, 1);

  const auto a = polarization_experiment(identities, config, 5);
  const auto b = polarization_experiment(identities, config, 5);
  REQUIRE(a.trials.size() == 3);
  for (std::size_t t = 0; t < a.trials.size(); ++t) {
    CHECK(a.trials[t].item_probs == b.trials[t].item_probs);
    CHECK(a.trials[t].bimodality == b.trials[t].bimodality);
  }
}

TEST_CASE("polarization csv carries the documented columns") {
  const std::vector<std::vector<Sequence>> identities = {
      {Sequence::tokenize("a1"), Sequence::tokenize("a2")},
      {Sequence::tokenize("a2"), Sequence::tokenize("a1")}};
  PolarizationConfig config;
  config.learner.ngram_order = 1;
  const auto result = polarization_experiment(identities, config, 3);
  const std::string csv = polarization_csv(result, TransmitMode::top_only);
  CHECK(csv.rfind("mode,trial,item,probability,bimodality\n", 0) == 0);
  CHECK(csv.find("top-only,0,a1,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 items
}
