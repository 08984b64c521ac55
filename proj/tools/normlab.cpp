// Command-line front end: episode runner, certification procedures,
// preference elicitation, and the scripted experiments.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "normlab/certify.hpp"
#include "normlab/errors.hpp"
#include "normlab/experiments.hpp"
#include "normlab/lmae.hpp"
#include "normlab/prefs.hpp"

namespace {

using namespace normlab;
using nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file '" + path + "'");
  out << content;
}

void emit(const std::optional<std::string>& out_path, const std::string& content) {
  if (out_path) {
    spill(*out_path, content);
  } else {
    std::cout << content;
  }
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) grid.push_back(std::stod(part));
  }
  return grid;
}

// Frame files: {"schema":"normlab.frame.v1","context_label":...,
// "observation":..., "candidates":[...], "epsilon":..., "horizon":...,
// "target":..., "alternative":...}. Classes are measured against the
// scenario backend unless "declared_classes" is set.
ActionFrame load_frame(PatternBackend& backend, const std::string& path,
                       std::optional<double> epsilon_override) {
  const json j = json::parse(slurp(path));
  if (j.value("schema", "") != "normlab.frame.v1") {
    throw ConfigError("expected schema normlab.frame.v1 in '" + path + "'");
  }
  std::vector<Sequence> candidates;
  for (const auto& c : j.at("candidates")) {
    candidates.push_back(Sequence::tokenize(c.get<std::string>()));
  }
  const double epsilon = epsilon_override.value_or(j.value("epsilon", 0.1));
  const Sequence label = Sequence::tokenize(j.value("context_label", ""));
  const Sequence obs = Sequence::tokenize(j.at("observation").get<std::string>());
  const std::size_t target = j.value("target", 0);
  const std::size_t alternative = j.value("alternative", 1);
  const int horizon = j.value("horizon", 1);
  if (j.value("declared_classes", false)) {
    return declared_action_frame(label, obs, candidates, epsilon, target, alternative);
  }
  return build_action_frame(backend, label, obs, candidates, epsilon, target,
                            alternative, horizon);
}

Actor pull_actor(const std::vector<Actor>& actors, const std::string& id) {
  for (const auto& a : actors) {
    if (a.id() == id) return a;
  }
  throw ConfigError("scenario has no actor '" + id + "'");
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed, int ticks,
            const std::string& verbosity, const std::optional<std::string>& out) {
  Engine engine(Scenario::load(scenario_path));
  const Trace trace =
      engine.run_episode(seed, ticks, verbosity_from_string(verbosity));
  const std::string jsonl = trace.to_jsonl();
  validate_trace_jsonl(jsonl);
  emit(out, jsonl);
  if (trace.error) {
    std::cerr << "episode aborted: " << *trace.error << "\n";
    return 2;
  }
  return 0;
}

int cmd_certify(const std::string& procedure, const std::string& scenario_path,
                const std::string& actor_id, const std::string& frame_path,
                const std::string& f_grid_csv, std::optional<double> epsilon,
                std::uint64_t seed, const std::optional<std::string>& out,
                const std::string& sanction_text, const std::string& sanctioner,
                bool contextual, const std::string& valence, double rate,
                double threshold) {
  Engine engine(Scenario::load(scenario_path));
  const std::vector<Actor> actors = engine.build_actors();
  const Actor actor = pull_actor(actors, actor_id);
  const ActionFrame frame = load_frame(actor.backend(), frame_path, epsilon);
  const std::vector<double> grid = parse_grid(f_grid_csv);

  std::string payload;
  std::string verdict;
  if (procedure == "convention") {
    const auto report = certify_convention_sensitivity(actor, frame, grid, seed);
    payload = report.to_json();
    verdict = to_string(report.verdict);
  } else if (procedure == "sanction") {
    const auto report = certify_sanction_sensitivity(
        actor, frame, Sequence::tokenize(sanction_text), contextual, seed,
        sanctioner, valence == "positive" ? Valence::positive : Valence::negative);
    payload = report.to_json();
    verdict = to_string(report.verdict);
  } else if (procedure == "reproduction") {
    const auto result = certify_reproduction(actor, frame, rate, grid, seed);
    json j = json::parse(result.report.to_json());
    j["reproduced"] = result.reproduced;
    if (result.f_min) j["f_min"] = *result.f_min;
    payload = j.dump(2);
    verdict = result.reproduced ? "reproduced" : "not-reproduced";
  } else if (procedure == "norm") {
    const auto result =
        classify_normative(actors, frame, rate, grid, threshold, seed);
    payload = result.to_json();
    verdict = result.normative
                  ? "normative"
                  : (result.narrow_scope_convention ? "narrow-scope-convention"
                                                    : "not-normative");
  } else {
    throw ConfigError("unknown certification procedure '" + procedure + "'");
  }
  emit(out, payload + "\n");
  std::cerr << procedure << ": " << verdict << "\n";
  return 0;
}

int cmd_elicit(const std::string& scenario_path, const std::string& backend_ref,
               const std::optional<std::string>& context_file,
               const std::string& context_text, const std::string& items_csv,
               bool symmetrize, const std::optional<std::string>& out) {
  Engine engine(Scenario::load(scenario_path));
  auto backend = engine.backend(backend_ref);
  std::string u_text = context_text;
  if (context_file) u_text = slurp(*context_file);
  const Sequence u = Sequence::tokenize(u_text);

  std::vector<Sequence> items;
  std::stringstream ss(items_csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) items.push_back(Sequence::tokenize(part));
  }
  const PreferenceRelation rel = elicit_relation(*backend, u, items, symmetrize);
  json j = json::parse(rel.to_json());
  json cycles = json::array();
  for (const auto& cycle : detect_cycles(rel)) {
    json one = json::array();
    for (const std::size_t idx : cycle) one.push_back(rel.items[idx].text());
    cycles.push_back(one);
  }
  j["cycles"] = cycles;
  emit(out, j.dump(2) + "\n");
  return 0;
}

int cmd_experiment(const std::string& kind, const std::string& config_path,
                   const std::optional<std::string>& out, int workers) {
  ExperimentConfig config = ExperimentConfig::load(config_path);
  if (experiment_kind_from_string(kind) != config.kind) {
    throw ConfigError("config file is for '" + to_string(config.kind) +
                      "', not '" + kind + "'");
  }
  if (config.kind == ExperimentKind::polarization) {
    // Polarization metrics use the documented per-item column layout.
    std::vector<std::vector<Sequence>> identities;
    for (const auto& ordering : config.identity_orderings) {
      std::vector<Sequence> items;
      for (const auto& item : ordering) items.push_back(Sequence::tokenize(item));
      identities.push_back(std::move(items));
    }
    std::string csv;
    for (const std::uint64_t seed : config.seeds) {
      const auto result =
          polarization_experiment(identities, config.polarization, seed);
      const std::string part =
          polarization_csv(result, config.polarization.transmit);
      csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
    }
    emit(out, csv);
    return 0;
  }
  const MetricsTable table = run_experiment(config, workers);
  emit(out, table.to_csv());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"normlab: linguistic multi-actor environments, generative actors, "
               "and convention/norm certification"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run an episode and write the trace");
  std::string run_scenario, run_verbosity = "actions";
  std::uint64_t run_seed = 1;
  int run_ticks = 0;
  std::string run_out;
  run->add_option("--scenario", run_scenario, "scenario JSON")->required();
  run->add_option("--seed", run_seed, "episode seed");
  run->add_option("--ticks", run_ticks, "override the scenario horizon");
  run->add_option("--out", run_out, "trace output path (JSON Lines)");
  run->add_option("--verbosity", run_verbosity, "actions|assemblies|full");

  // certify
  auto* certify = app.add_subcommand("certify", "run a certification procedure");
  std::string c_proc, c_scenario, c_actor, c_frame, c_grid = "0.25,0.5,0.75,1.0";
  std::string c_out, c_sanction = "shame on you", c_sanctioner = "observer";
  std::string c_valence = "negative";
  double c_eps = -1.0, c_rate = 0.5, c_threshold = 0.9;
  std::uint64_t c_seed = 1;
  bool c_contextual = false;
  certify->add_option("procedure", c_proc, "convention|sanction|reproduction|norm")
      ->required();
  certify->add_option("--scenario", c_scenario, "scenario JSON")->required();
  certify->add_option("--actor", c_actor, "actor id (population procedures ignore it)");
  certify->add_option("--frame", c_frame, "action frame JSON")->required();
  certify->add_option("--f-grid", c_grid, "comma-separated edit fractions");
  certify->add_option("--epsilon", c_eps, "override the frame epsilon");
  certify->add_option("--seed", c_seed, "edit shuffle seed");
  certify->add_option("--out", c_out, "report output path");
  certify->add_option("--sanction", c_sanction, "sanction text");
  certify->add_option("--sanctioner", c_sanctioner, "sanctioner id");
  certify->add_flag("--contextual", c_contextual, "pin the frame context label");
  certify->add_option("--valence", c_valence, "negative|positive");
  certify->add_option("--rate", c_rate, "reproduction rate r");
  certify->add_option("--threshold", c_threshold, "generic scope threshold");

  // elicit
  auto* elicit = app.add_subcommand("elicit", "elicit a preference relation");
  std::string e_scenario, e_backend = "shared", e_context_file, e_context, e_items;
  std::string e_out;
  bool e_symmetrize = false;
  elicit->add_option("--scenario", e_scenario, "scenario JSON (supplies the backend)")
      ->required();
  elicit->add_option("--backend", e_backend, "backend ref inside the scenario");
  elicit->add_option("--context-file", e_context_file, "file holding the influence u");
  elicit->add_option("--context", e_context, "influence u as literal text");
  elicit->add_option("--items", e_items, "comma-separated items")->required();
  elicit->add_flag("--symmetrize", e_symmetrize, "average both presentation orders");
  elicit->add_option("--out", e_out, "relation output path");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run a scripted experiment");
  std::string x_kind, x_config, x_out;
  int x_workers = 1;
  experiment
      ->add_option("kind", x_kind,
                   "norm-stability|norm-adoption|tipping-point|"
                   "consolidation-lesion|polarization")
      ->required();
  experiment->add_option("--config", x_config, "experiment config JSON")->required();
  experiment->add_option("--out", x_out, "metrics CSV path");
  experiment->add_option("--workers", x_workers, "parallel seed workers");

  CLI11_PARSE(app, argc, argv);

  auto opt = [](const std::string& s) {
    return s.empty() ? std::optional<std::string>{} : std::optional<std::string>{s};
  };

  try {
    if (*run) {
      return cmd_run(run_scenario, run_seed, run_ticks, run_verbosity, opt(run_out));
    }
    if (*certify) {
      return cmd_certify(c_proc, c_scenario, c_actor, c_frame, c_grid,
                         c_eps > 0 ? std::optional<double>{c_eps} : std::nullopt,
                         c_seed, opt(c_out), c_sanction, c_sanctioner, c_contextual,
                         c_valence, c_rate, c_threshold);
    }
    if (*elicit) {
      return cmd_elicit(e_scenario, e_backend, opt(e_context_file), e_context,
                        e_items, e_symmetrize, opt(e_out));
    }
    if (*experiment) {
      return cmd_experiment(x_kind, x_config, opt(x_out), x_workers);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
