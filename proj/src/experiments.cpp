#include "normlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "json_util.hpp"
#include "normlab/actor.hpp"
#include "normlab/certify.hpp"
#include "normlab/errors.hpp"

namespace normlab {

namespace {

using nlohmann::json;

SummaryChain experiment_chain() {
  SummaryChain chain;
  chain.steps.push_back(
      {ChainStep::Kind::retrieve, {"{observation}", FramingKind::query}, 0});
  chain.policy = {kDefaultPolicyTemplate, FramingKind::policy};
  chain.memorize = {"", FramingKind::memorize};
  return chain;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double uniform_draw(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// The population used by the stability, adoption, and tipping runs: actors
// share one precedent backend and differ only in memory.
struct Population {
  std::shared_ptr<CountBackend> backend;
  std::vector<Actor> actors;
  ActionFrame behavior;
  ActionFrame sanctioning;
};

Population make_population(const ExperimentConfig& cfg) {
  Population pop;
  BackendConfig bcfg = cfg.backend;
  if (bcfg.negative_sanctions.empty()) {
    bcfg.negative_sanctions = {Sequence::tokenize(cfg.sanction)};
  }
  pop.backend = std::make_shared<CountBackend>(bcfg);
  pop.behavior = declared_action_frame(
      Sequence(), Sequence::tokenize(cfg.context),
      {Sequence::tokenize(cfg.norm_action), Sequence::tokenize(cfg.violation_action)},
      0.1, 0, 1);
  pop.sanctioning = declared_action_frame(
      Sequence(), Sequence::tokenize(cfg.witness_observation),
      {Sequence::tokenize(cfg.sanction), Sequence::tokenize(cfg.pass_action)}, 0.1,
      0, 1);
  return pop;
}

Memory seeded_memory(const ExperimentConfig& cfg, int norm, int violation,
                     int sanction, int pass) {
  Memory m;
  const Sequence o = Sequence::tokenize(cfg.context);
  const Sequence w = Sequence::tokenize(cfg.witness_observation);
  for (int k = 0; k < norm; ++k) {
    m.append(Sequence::tokenize(
        make_record(o, "m" + std::to_string(k + 1), Sequence::tokenize(cfg.norm_action))
            .serialize()));
  }
  for (int k = 0; k < violation; ++k) {
    m.append(Sequence::tokenize(
        make_record(o, "m" + std::to_string(k + 1),
                    Sequence::tokenize(cfg.violation_action))
            .serialize()));
  }
  for (int k = 0; k < sanction; ++k) {
    m.append(Sequence::tokenize(
        make_record(w, "q" + std::to_string(k + 1), Sequence::tokenize(cfg.sanction))
            .serialize()));
  }
  for (int k = 0; k < pass; ++k) {
    m.append(Sequence::tokenize(
        make_record(w, "q" + std::to_string(k + 1), Sequence::tokenize(cfg.pass_action))
            .serialize()));
  }
  return m;
}

struct TickOutcome {
  double compliance_mean = 0.0;      // mean exact P(norm class)
  double drawn_compliance = 0.0;     // fraction of drawn norm actions
  double sanction_prob_mean = 0.0;   // mean exact P(sanction | witness)
  int violations = 0;
  int sanctions = 0;
  std::vector<double> norm_prob;     // per actor
  std::vector<double> sanction_prob; // per actor
};

// One simultaneous tick: draws, sanction emissions, and the broadcast of all
// produced records into every memory.
TickOutcome population_tick(Population& pop, const ExperimentConfig& cfg,
                            std::uint64_t seed, int tick) {
  const std::size_t n = pop.actors.size();
  TickOutcome out;
  out.norm_prob.resize(n);
  out.sanction_prob.resize(n);

  std::vector<bool> violated(n, false);
  std::vector<Sequence> actions(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = action_class_prob(pop.actors[i], pop.behavior, std::nullopt);
    const double p_norm = probs.by_class[pop.behavior.target_class()];
    out.norm_prob[i] = p_norm;
    out.compliance_mean += p_norm / static_cast<double>(n);
    const double u = uniform_draw(mix_seed(seed, tick, i, 1));
    if (u < p_norm) {
      actions[i] = pop.behavior.candidates[pop.behavior.target];
      out.drawn_compliance += 1.0 / static_cast<double>(n);
    } else {
      actions[i] = pop.behavior.candidates[pop.behavior.alternative];
      violated[i] = true;
      ++out.violations;
    }
  }

  for (std::size_t j = 0; j < n; ++j) {
    const auto probs = action_class_prob(pop.actors[j], pop.sanctioning, std::nullopt);
    out.sanction_prob[j] = probs.by_class[pop.sanctioning.target_class()];
    out.sanction_prob_mean += out.sanction_prob[j] / static_cast<double>(n);
  }

  // Observers sanction violators with their own precedent-driven probability.
  std::vector<std::vector<std::string>> sanctioners(n);
  if (cfg.sanctions_enabled) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!violated[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double u = uniform_draw(mix_seed(seed, tick, j * n + i, 2));
        if (u < out.sanction_prob[j]) {
          sanctioners[i].push_back(pop.actors[j].id());
          ++out.sanctions;
        }
      }
    }
  }

  // Broadcast: behavior records (with attached sanction clauses), then the
  // sanctioning acts themselves as records of action.
  std::vector<Sequence> broadcast;
  const Sequence o = Sequence::tokenize(cfg.context);
  const Sequence w = Sequence::tokenize(cfg.witness_observation);
  const Sequence s = Sequence::tokenize(cfg.sanction);
  for (std::size_t i = 0; i < n; ++i) {
    ParsedRecord rec;
    rec.observation = o;
    rec.clauses.emplace_back(pop.actors[i].id(), actions[i]);
    for (const auto& who : sanctioners[i]) rec.clauses.emplace_back(who, s);
    broadcast.push_back(Sequence::tokenize(rec.serialize()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& who : sanctioners[i]) {
      broadcast.push_back(Sequence::tokenize(make_record(w, who, s).serialize()));
    }
  }
  for (auto& actor : pop.actors) {
    Memory m = actor.memory();
    for (const auto& entry : broadcast) m.append(entry);
    actor.set_memory(std::move(m));
  }
  return out;
}

int count_sanction_precedents(const Actor& actor, const ExperimentConfig& cfg) {
  const Sequence s = Sequence::tokenize(cfg.sanction);
  const Sequence w = Sequence::tokenize(cfg.witness_observation);
  int count = 0;
  for (const auto& entry : actor.memory().entries) {
    const auto rec = parse_record(entry.text());
    if (rec && rec->observation == w && rec->clauses.front().second == s) ++count;
  }
  return count;
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "norm-stability") return ExperimentKind::norm_stability;
  if (s == "norm-adoption") return ExperimentKind::norm_adoption;
  if (s == "tipping-point") return ExperimentKind::tipping_point;
  if (s == "consolidation-lesion") return ExperimentKind::consolidation_lesion;
  if (s == "polarization") return ExperimentKind::polarization;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::norm_stability: return "norm-stability";
    case ExperimentKind::norm_adoption: return "norm-adoption";
    case ExperimentKind::tipping_point: return "tipping-point";
    case ExperimentKind::consolidation_lesion: return "consolidation-lesion";
    case ExperimentKind::polarization: return "polarization";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (kind == ExperimentKind::norm_stability || kind == ExperimentKind::norm_adoption ||
      kind == ExperimentKind::tipping_point) {
    if (population < 2) throw ConfigError("population experiments need N >= 2");
    if (norm_action == violation_action) {
      throw ConfigError("norm and violation actions must differ");
    }
  }
  if (kind == ExperimentKind::tipping_point && minority_grid.empty()) {
    throw ConfigError("tipping-point needs a nonempty minority fraction grid");
  }
  if (kind == ExperimentKind::consolidation_lesion && consolidation_reps < 0) {
    throw ConfigError("consolidation_reps must be >= 0");
  }
  if (kind == ExperimentKind::polarization && identity_orderings.size() < 2) {
    throw ConfigError("polarization needs >= 2 identities");
  }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("schema", "") != "normlab.experiment.v1") {
    throw ConfigError("expected schema normlab.experiment.v1");
  }
  ExperimentConfig cfg;
  cfg.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  cfg.population = j.value("population", 8);
  cfg.horizon = j.value("horizon", 50);
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    cfg.seeds = {j.value("seed", std::uint64_t{1})};
  }
  if (j.contains("backend")) {
    cfg.backend = detail::backend_config_from_json(j.at("backend"));
  } else {
    cfg.backend.kind = BackendKind::weighted;
    cfg.backend.sanction_discount = 0.5;
  }
  cfg.context = j.value("context", cfg.context);
  cfg.norm_action = j.value("norm_action", cfg.norm_action);
  cfg.violation_action = j.value("violation_action", cfg.violation_action);
  cfg.witness_observation = j.value("witness_observation", cfg.witness_observation);
  cfg.sanction = j.value("sanction", cfg.sanction);
  cfg.pass_action = j.value("pass_action", cfg.pass_action);
  cfg.seed_norm = j.value("seed_norm", cfg.seed_norm);
  cfg.seed_violation = j.value("seed_violation", cfg.seed_violation);
  cfg.seed_sanction = j.value("seed_sanction", cfg.seed_sanction);
  cfg.seed_pass = j.value("seed_pass", cfg.seed_pass);
  cfg.sanctions_enabled = j.value("sanctions_enabled", true);
  cfg.newcomer_contrary = j.value("newcomer_contrary", 0);
  if (j.contains("minority_grid")) {
    cfg.minority_grid = j.at("minority_grid").get<std::vector<double>>();
  }
  cfg.minority_strength = j.value("minority_strength", cfg.minority_strength);
  cfg.consolidation_reps = j.value("consolidation_reps", cfg.consolidation_reps);
  if (j.contains("polarization")) {
    const json& p = j.at("polarization");
    cfg.polarization.transmit = p.value("transmit", std::string("top-only")) ==
                                        std::string("full-relation")
                                    ? TransmitMode::full_relation
                                    : TransmitMode::top_only;
    cfg.polarization.trials = p.value("trials", 1);
    cfg.polarization.draws_per_trial = p.value("draws_per_trial", 0);
    if (p.contains("learner")) {
      cfg.polarization.learner = detail::backend_config_from_json(p.at("learner"));
    } else {
      cfg.polarization.learner.ngram_order = 1;
    }
    cfg.identity_orderings =
        p.value("identities", std::vector<std::vector<std::string>>{});
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

void MetricsTable::validate() const {
  // For each metric, every seed must report exactly the same set of points.
  std::map<std::string, std::map<std::uint64_t, std::set<double>>> seen;
  for (const auto& row : rows) {
    seen[row.metric][row.seed].insert(row.point);
  }
  for (const auto& [metric, by_seed] : seen) {
    const std::set<double>* reference = nullptr;
    for (const auto& [seed, points] : by_seed) {
      if (!reference) {
        reference = &points;
      } else if (points != *reference) {
        throw Error("metric '" + metric + "' has inconsistent points across seeds");
      }
    }
  }
}

std::string MetricsTable::to_csv() const {
  std::string out = "experiment,seed,point,metric,value\n";
  for (const auto& row : rows) {
    out += row.experiment + "," + std::to_string(row.seed) + "," + fmt(row.point) +
           "," + row.metric + "," + fmt(row.value) + "\n";
  }
  return out;
}

std::optional<double> MetricsTable::lookup(std::uint64_t seed, double point,
                                           const std::string& metric) const {
  for (const auto& row : rows) {
    if (row.seed == seed && row.metric == metric && row.point == point) {
      return row.value;
    }
  }
  return std::nullopt;
}

std::vector<double> MetricsTable::series(std::uint64_t seed,
                                         const std::string& metric) const {
  std::vector<std::pair<double, double>> points;
  for (const auto& row : rows) {
    if (row.seed == seed && row.metric == metric) {
      points.emplace_back(row.point, row.value);
    }
  }
  std::sort(points.begin(), points.end());
  std::vector<double> out;
  for (const auto& [point, value] : points) out.push_back(value);
  return out;
}

MetricsTable norm_stability(const ExperimentConfig& config, std::uint64_t seed) {
  MetricsTable table;
  Population pop = make_population(config);
  for (int i = 0; i < config.population; ++i) {
    pop.actors.emplace_back("a" + std::to_string(i + 1), pop.backend,
                            experiment_chain(),
                            seeded_memory(config, config.seed_norm,
                                          config.seed_violation, config.seed_sanction,
                                          config.seed_pass));
  }
  const std::string name = to_string(config.kind);
  for (int t = 0; t < config.horizon; ++t) {
    const TickOutcome out = population_tick(pop, config, seed, t);
    const double tick = static_cast<double>(t);
    table.rows.push_back({name, seed, tick, "compliance", out.compliance_mean});
    table.rows.push_back({name, seed, tick, "drawn_compliance", out.drawn_compliance});
    table.rows.push_back({name, seed, tick, "sanction_rate", out.sanction_prob_mean});
    table.rows.push_back(
        {name, seed, tick, "sanctions_emitted", static_cast<double>(out.sanctions)});
    table.rows.push_back(
        {name, seed, tick, "violations", static_cast<double>(out.violations)});
  }
  return table;
}

MetricsTable norm_adoption(const ExperimentConfig& config, std::uint64_t seed) {
  MetricsTable table;
  Population pop = make_population(config);
  for (int i = 0; i < config.population; ++i) {
    pop.actors.emplace_back("a" + std::to_string(i + 1), pop.backend,
                            experiment_chain(),
                            seeded_memory(config, config.seed_norm,
                                          config.seed_violation, config.seed_sanction,
                                          config.seed_pass));
  }
  // The newcomer has no norm-relevant memory (or deliberately contrary
  // precedents for the slow-adaptation control).
  pop.actors.emplace_back("new1", pop.backend, experiment_chain(),
                          seeded_memory(config, 0, config.newcomer_contrary, 0, 0));
  const std::size_t newcomer = pop.actors.size() - 1;

  const std::string name = to_string(config.kind);
  for (int t = 0; t < config.horizon; ++t) {
    const TickOutcome out = population_tick(pop, config, seed, t);
    const double tick = static_cast<double>(t);
    table.rows.push_back(
        {name, seed, tick, "newcomer_compliance", out.norm_prob[newcomer]});
    table.rows.push_back(
        {name, seed, tick, "newcomer_sanction_prob", out.sanction_prob[newcomer]});
    table.rows.push_back({name, seed, tick, "newcomer_sanction_precedents",
                          static_cast<double>(count_sanction_precedents(
                              pop.actors[newcomer], config))});
    table.rows.push_back({name, seed, tick, "population_compliance",
                          out.compliance_mean});
  }
  return table;
}

MetricsTable tipping_point(const ExperimentConfig& config, std::uint64_t seed) {
  MetricsTable table;
  const std::string name = to_string(config.kind);
  double critical = -1.0;
  for (const double q : config.minority_grid) {
    Population pop = make_population(config);
    const int minority =
        static_cast<int>(std::lround(q * static_cast<double>(config.population)));
    for (int i = 0; i < config.population; ++i) {
      const bool committed = i < minority;
      Memory m = committed
                     ? seeded_memory(config, 0, config.minority_strength, 0, 0)
                     : seeded_memory(config, config.seed_norm, 0, 0, 0);
      pop.actors.emplace_back("a" + std::to_string(i + 1), pop.backend,
                              experiment_chain(), std::move(m));
    }
    ExperimentConfig quiet = config;
    quiet.sanctions_enabled = false;  // pure convention dynamics
    TickOutcome out;
    for (int t = 0; t < config.horizon; ++t) {
      out = population_tick(pop, quiet,
                            mix_seed(seed, static_cast<std::uint64_t>(
                                               std::llround(q * 1e6))),
                            t);
    }
    const double adoption = 1.0 - out.compliance_mean;
    table.rows.push_back({name, seed, q, "final_adoption", adoption});
    if (critical < 0.0 && adoption > 0.5) critical = q;
  }
  table.rows.push_back({name, seed, 0.0, "critical_fraction", critical});
  return table;
}

MetricsTable consolidation_lesion(const ExperimentConfig& config, std::uint64_t seed) {
  MetricsTable table;
  const std::string name = to_string(config.kind);

  const Memory full = seeded_memory(config, config.seed_norm, config.seed_violation,
                                    0, 0);
  const Sequence norm_action = Sequence::tokenize(config.norm_action);
  auto norm_predicate = [&](const Sequence& entry) {
    const auto rec = parse_record(entry.text());
    return rec && rec->clauses.front().second == norm_action;
  };
  const Memory lesioned = lesion(full, norm_predicate);

  Corpus norm_corpus;
  for (const auto& entry : full.entries) {
    const auto rec = parse_record(entry.text());
    if (rec && rec->clauses.front().second == norm_action) {
      for (int r = 0; r < config.consolidation_reps; ++r) {
        norm_corpus.entries.push_back(entry);
      }
    }
  }

  Population pop = make_population(config);
  Actor actor("a1", pop.backend, experiment_chain(), full);

  auto cell = [&](const Memory& memory) {
    Actor ghost = actor;
    ghost.set_memory(memory);
    return action_class_prob(ghost, pop.behavior, std::nullopt).by_class;
  };

  const auto cell_a = cell(full);      // memory, unconsolidated
  const auto cell_b = cell(lesioned);  // lesioned, unconsolidated
  pop.backend->consolidate(norm_corpus);
  const auto cell_c = cell(full);      // memory, consolidated
  const auto cell_d = cell(lesioned);  // lesioned, consolidated

  table.rows.push_back({name, seed, 0.0, "tv_pre_consolidation",
                        tv_distance(cell_a, cell_b)});
  table.rows.push_back({name, seed, 0.0, "tv_post_consolidation",
                        tv_distance(cell_c, cell_d)});
  table.rows.push_back({name, seed, 0.0, "p_norm_memory", cell_a[0]});
  table.rows.push_back({name, seed, 0.0, "p_norm_lesioned", cell_b[0]});
  table.rows.push_back({name, seed, 0.0, "p_norm_consolidated", cell_c[0]});
  table.rows.push_back({name, seed, 0.0, "p_norm_consolidated_lesioned", cell_d[0]});

  // Consolidating the records exactly once and deleting them from memory
  // reproduces the unconsolidated in-context behavior bit for bit.
  Population fresh = make_population(config);
  Actor twin("a1", fresh.backend, experiment_chain(), full);
  Corpus once;
  for (const auto& entry : full.entries) {
    const auto rec = parse_record(entry.text());
    if (rec && rec->clauses.front().second == norm_action) {
      once.entries.push_back(entry);
    }
  }
  fresh.backend->consolidate(once);
  Actor twin_lesioned = twin;
  twin_lesioned.set_memory(lesioned);
  const auto moved = action_class_prob(twin_lesioned, fresh.behavior, std::nullopt);
  table.rows.push_back({name, seed, 0.0, "tv_virtual_lesion_identity",
                        tv_distance(moved.by_class, cell_a)});
  return table;
}

MetricsTable polarization_metrics(const ExperimentConfig& config, std::uint64_t seed) {
  MetricsTable table;
  std::vector<std::vector<Sequence>> identities;
  for (const auto& ordering : config.identity_orderings) {
    std::vector<Sequence> items;
    for (const auto& item : ordering) items.push_back(Sequence::tokenize(item));
    identities.push_back(std::move(items));
  }
  const PolarizationResult result =
      polarization_experiment(identities, config.polarization, seed);
  const std::string name = to_string(config.kind);
  for (const auto& trial : result.trials) {
    const double point = static_cast<double>(trial.trial);
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      table.rows.push_back({name, seed, point, "p_" + result.items[i].text(),
                            trial.item_probs[i]});
    }
    table.rows.push_back({name, seed, point, "bimodality", trial.bimodality});
  }
  return table;
}

MetricsTable run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  std::vector<MetricsTable> parts(config.seeds.size());
  auto run_one = [&](std::size_t idx) {
    const std::uint64_t seed = config.seeds[idx];
    switch (config.kind) {
      case ExperimentKind::norm_stability: parts[idx] = norm_stability(config, seed); break;
      case ExperimentKind::norm_adoption: parts[idx] = norm_adoption(config, seed); break;
      case ExperimentKind::tipping_point: parts[idx] = tipping_point(config, seed); break;
      case ExperimentKind::consolidation_lesion:
        parts[idx] = consolidation_lesion(config, seed);
        break;
      case ExperimentKind::polarization:
        parts[idx] = polarization_metrics(config, seed);
        break;
    }
  };
  if (workers <= 1 || config.seeds.size() <= 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> threads;
    std::atomic<std::size_t> next{0};
    const int n = std::min<int>(workers, static_cast<int>(config.seeds.size()));
    for (int w = 0; w < n; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < config.seeds.size();
             i = next.fetch_add(1)) {
          run_one(i);
        }
      });
    }
    for (auto& th : threads) th.join();
  }
  MetricsTable merged;
  for (const auto& part : parts) {
    merged.rows.insert(merged.rows.end(), part.rows.begin(), part.rows.end());
  }
  merged.validate();
  return merged;
}

}  // namespace normlab
