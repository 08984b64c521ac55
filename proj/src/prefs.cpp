#include "normlab/prefs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <random>
#include <set>

#include <json.hpp>

#include "normlab/errors.hpp"

namespace normlab {

namespace {

// The elicitation prompt: influence, option menu, choice line. The trailing
// "chooser :" makes this an action-emission query for precedent-aware
// backends; free-text backends answer from their tables.
Sequence choice_context(const Sequence& u, const std::vector<Sequence>& menu) {
  std::string text;
  if (!u.empty()) text += u.text() + " | ";
  text += "options :";
  for (std::size_t i = 0; i < menu.size(); ++i) {
    text += (i ? " | " : " ") + menu[i].text();
  }
  text += " | you must now choose chooser :";
  return Sequence::tokenize(text);
}

std::vector<double> menu_probs(PatternBackend& backend, const Sequence& u,
                               const std::vector<Sequence>& menu) {
  const Sequence ctx = choice_context(u, menu);
  std::vector<double> lp(menu.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < menu.size(); ++i) {
    lp[i] = backend.log_prob(ctx, menu[i]);
    mx = std::max(mx, lp[i]);
  }
  if (std::isinf(mx)) throw Error("no menu item has probability mass");
  std::vector<double> w(menu.size());
  double total = 0.0;
  for (std::size_t i = 0; i < menu.size(); ++i) {
    w[i] = std::exp(lp[i] - mx);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

PairwiseResult elicit_pairwise(PatternBackend& backend, const Sequence& u,
                               const Sequence& x0, const Sequence& x1,
                               bool symmetrize) {
  if (x0 == x1) throw ConfigError("elicit_pairwise: options must differ");
  PairwiseResult out;
  out.x0 = x0;
  out.x1 = x1;
  out.symmetrized = symmetrize;
  const auto forward = menu_probs(backend, u, {x0, x1});
  if (symmetrize) {
    const auto backward = menu_probs(backend, u, {x1, x0});
    out.p0 = 0.5 * (forward[0] + backward[1]);
    out.p1 = 0.5 * (forward[1] + backward[0]);
  } else {
    out.p0 = forward[0];
    out.p1 = forward[1];
  }
  if (out.p0 > out.p1 + kPrefTolerance) {
    out.direction = 1;
  } else if (out.p1 > out.p0 + kPrefTolerance) {
    out.direction = -1;
  }
  return out;
}

const PreferenceEdge& PreferenceRelation::edge(std::size_t i, std::size_t j) const {
  for (const auto& e : edges) {
    if ((e.i == i && e.j == j) || (e.i == j && e.j == i)) return e;
  }
  throw Error("relation has no edge for the requested pair");
}

bool PreferenceRelation::strictly_prefers(std::size_t i, std::size_t j) const {
  const PreferenceEdge& e = edge(i, j);
  if (e.i == i) return e.direction == 1;
  return e.direction == -1;
}

std::string PreferenceRelation::to_json() const {
  nlohmann::json j;
  j["schema"] = "normlab.relation.v1";
  j["context"] = context.text();
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& x : items) items_json.push_back(x.text());
  j["items"] = items_json;
  nlohmann::json edges_json = nlohmann::json::array();
  for (const auto& e : edges) {
    edges_json.push_back({{"i", e.i},
                          {"j", e.j},
                          {"p_i", e.p_i},
                          {"p_j", e.p_j},
                          {"direction", e.direction}});
  }
  j["edges"] = edges_json;
  j["elicitation_log"] = elicitation_log;
  return j.dump(2);
}

PreferenceRelation elicit_relation(PatternBackend& backend, const Sequence& u,
                                   const std::vector<Sequence>& items,
                                   bool symmetrize) {
  if (items.size() < 2) throw ConfigError("elicit_relation needs >= 2 items");
  PreferenceRelation rel;
  rel.items = items;
  rel.context = u;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      const PairwiseResult pr =
          elicit_pairwise(backend, u, items[i], items[j], symmetrize);
      rel.edges.push_back({i, j, pr.p0, pr.p1, pr.direction});
      rel.elicitation_log.push_back(items[i].text() + " vs " + items[j].text());
    }
  }
  return rel;
}

RankingResult elicit_ranking(PatternBackend& backend, const Sequence& u,
                             const std::vector<Sequence>& items) {
  RankingResult out;
  out.probs = menu_probs(backend, u, items);
  out.order.resize(items.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return out.probs[a] > out.probs[b];
                   });
  return out;
}

std::vector<std::vector<std::size_t>> detect_cycles(const PreferenceRelation& rel,
                                                    int max_len) {
  if (max_len < 2) throw ConfigError("cycle length bound must be >= 2");
  const std::size_t n = rel.items.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && rel.strictly_prefers(i, j)) adj[i][j] = true;
    }
  }
  std::vector<std::vector<std::size_t>> cycles;
  std::vector<std::size_t> path;
  std::vector<bool> on_path(n, false);
  // Canonical form: every cycle is reported starting from its smallest node,
  // so each simple cycle appears exactly once.
  std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t start,
                                                          std::size_t node) {
    if (adj[node][start] && path.size() >= 2) cycles.push_back(path);
    if (path.size() == static_cast<std::size_t>(max_len)) return;
    for (std::size_t next = start + 1; next < n; ++next) {
      if (on_path[next] || !adj[node][next]) continue;
      path.push_back(next);
      on_path[next] = true;
      dfs(start, next);
      on_path[next] = false;
      path.pop_back();
    }
  };
  for (std::size_t s = 0; s < n; ++s) {
    path = {s};
    on_path.assign(n, false);
    on_path[s] = true;
    dfs(s, s);
  }
  return cycles;
}

std::vector<IiaViolation> check_iia(PatternBackend& backend, const Sequence& u,
                                    const std::vector<Sequence>& items,
                                    const std::vector<std::vector<std::size_t>>& menus) {
  for (const auto& menu : menus) {
    if (menu.size() < 2) throw ConfigError("iia menus need >= 2 items");
    for (const std::size_t idx : menu) {
      if (idx >= items.size()) throw ConfigError("iia menu index out of range");
    }
  }
  // Identify singleton-extension pairs; the menu list must contain at least one.
  struct Pair {
    std::size_t small, big;
  };
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < menus.size(); ++a) {
    for (std::size_t b = 0; b < menus.size(); ++b) {
      if (a == b) continue;
      const std::set<std::size_t> sa(menus[a].begin(), menus[a].end());
      const std::set<std::size_t> sb(menus[b].begin(), menus[b].end());
      if (sb.size() != sa.size() + 1) continue;
      if (!std::includes(sb.begin(), sb.end(), sa.begin(), sa.end())) continue;
      pairs.push_back({a, b});
    }
  }
  if (pairs.empty()) {
    throw ConfigError("iia menus must include at least one singleton-difference pair");
  }

  std::map<std::size_t, std::vector<double>> probs;
  auto menu_prob = [&](std::size_t m) -> const std::vector<double>& {
    auto it = probs.find(m);
    if (it == probs.end()) {
      std::vector<Sequence> menu_items;
      for (const std::size_t idx : menus[m]) menu_items.push_back(items[idx]);
      it = probs.emplace(m, menu_probs(backend, u, menu_items)).first;
    }
    return it->second;
  };

  std::vector<IiaViolation> out;
  for (const auto& [small, big] : pairs) {
    const auto& ps = menu_prob(small);
    const auto& pb = menu_prob(big);
    auto pos = [&](const std::vector<std::size_t>& menu, std::size_t item) {
      for (std::size_t k = 0; k < menu.size(); ++k) {
        if (menu[k] == item) return k;
      }
      return menu.size();
    };
    for (std::size_t xi = 0; xi < menus[small].size(); ++xi) {
      for (std::size_t yi = xi + 1; yi < menus[small].size(); ++yi) {
        const std::size_t x = menus[small][xi], y = menus[small][yi];
        const double pxs = ps[xi], pys = ps[yi];
        const double pxb = pb[pos(menus[big], x)], pyb = pb[pos(menus[big], y)];
        const bool x_over_y_small = pxs > pys + kPrefTolerance;
        const bool y_over_x_small = pys > pxs + kPrefTolerance;
        const bool x_over_y_big = pxb > pyb + kPrefTolerance;
        const bool y_over_x_big = pyb > pxb + kPrefTolerance;
        if ((x_over_y_small && y_over_x_big) || (y_over_x_small && x_over_y_big)) {
          out.push_back({menus[small], menus[big], x, y, pxs, pys, pxb, pyb});
        }
      }
    }
  }
  return out;
}

std::string polarization_csv(const PolarizationResult& result, TransmitMode mode) {
  const std::string mode_name =
      mode == TransmitMode::top_only ? "top-only" : "full-relation";
  std::string out = "mode,trial,item,probability,bimodality\n";
  char buf[64];
  for (const auto& trial : result.trials) {
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", trial.item_probs[i]);
      out += mode_name + "," + std::to_string(trial.trial) + "," +
             result.items[i].text() + "," + buf;
      std::snprintf(buf, sizeof(buf), "%.17g", trial.bimodality);
      out += std::string(",") + buf + "\n";
    }
  }
  return out;
}

PolarizationResult polarization_experiment(
    const std::vector<std::vector<Sequence>>& identity_orderings,
    const PolarizationConfig& config, std::uint64_t seed) {
  if (identity_orderings.empty()) {
    throw ConfigError("polarization needs at least one identity");
  }
  PolarizationResult out;
  out.items = identity_orderings.front();
  std::sort(out.items.begin(), out.items.end(),
            [](const Sequence& a, const Sequence& b) { return a.text() < b.text(); });
  for (const auto& ordering : identity_orderings) {
    std::vector<Sequence> sorted = ordering;
    std::sort(sorted.begin(), sorted.end(), [](const Sequence& a, const Sequence& b) {
      return a.text() < b.text();
    });
    if (sorted != out.items) {
      throw ConfigError("all identities must order the same item set");
    }
  }

  out.is_extreme.assign(out.items.size(), false);
  for (const auto& ordering : identity_orderings) {
    for (std::size_t i = 0; i < out.items.size(); ++i) {
      if (out.items[i] == ordering.front()) out.is_extreme[i] = true;
    }
  }

  auto utterance = [&](std::size_t identity) {
    const auto& ordering = identity_orderings[identity];
    std::string who = "v" + std::to_string(identity + 1);
    if (config.transmit == TransmitMode::top_only) {
      return who + " chooses " + ordering.front().text();
    }
    std::string text = who + " prefers";
    for (std::size_t k = 0; k < ordering.size(); ++k) {
      text += (k ? " to " : " ") + ordering[k].text();
    }
    return text;
  };

  for (int trial = 0; trial < config.trials; ++trial) {
    std::vector<std::string> corpus_lines;
    if (config.draws_per_trial <= 0) {
      for (std::size_t i = 0; i < identity_orderings.size(); ++i) {
        corpus_lines.push_back(utterance(i));
      }
    } else {
      std::mt19937_64 rng(mix_seed(seed, trial, 0x901au));
      std::uniform_int_distribution<std::size_t> pick(0, identity_orderings.size() - 1);
      for (int d = 0; d < config.draws_per_trial; ++d) {
        corpus_lines.push_back(utterance(pick(rng)));
      }
    }
    if (trial == 0) out.corpus_preview = corpus_lines;

    Corpus corpus;
    for (const auto& line : corpus_lines) {
      corpus.entries.push_back(Sequence::tokenize(line));
    }
    CountBackend learner(config.learner, corpus);
    PolarizationTrial row;
    row.trial = trial;
    row.item_probs = menu_probs(learner, Sequence::tokenize("the next choice is"),
                                out.items);
    for (std::size_t i = 0; i < out.items.size(); ++i) {
      row.bimodality += out.is_extreme[i] ? row.item_probs[i] : -row.item_probs[i];
    }
    out.trials.push_back(std::move(row));
  }
  return out;
}

}  // namespace normlab
