#include "normlab/lmae.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "json_util.hpp"
#include "normlab/errors.hpp"
#include "normlab/remote.hpp"

namespace normlab {

namespace {

using nlohmann::json;

std::string render_rule(const std::string& tmpl,
                        const std::map<std::string, std::string>& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i++]);
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string::npos) {
      out.push_back(tmpl[i++]);
      continue;
    }
    const std::string name = tmpl.substr(i + 1, close - i - 1);
    auto it = slots.find(name);
    if (it == slots.end()) {
      out.push_back(tmpl[i++]);
      continue;
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

const RuleTemplate& pick_template(const std::vector<RuleTemplate>& options,
                                  std::uint64_t seed) {
  if (options.size() == 1) return options.front();
  double total = 0.0;
  for (const auto& o : options) total += o.weight;
  std::mt19937_64 rng(seed);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (const auto& o : options) {
    u -= o.weight;
    if (u < 0.0) return o;
  }
  return options.back();
}

std::vector<RuleTemplate> templates_from_json(const json& j) {
  std::vector<RuleTemplate> out;
  if (j.contains("template")) {
    out.push_back({j.at("template").get<std::string>(), 1.0});
  }
  if (j.contains("templates")) {
    for (const auto& t : j.at("templates")) {
      out.push_back({t.at("template").get<std::string>(), t.value("weight", 1.0)});
    }
  }
  if (out.empty()) throw ConfigError("rule needs a template");
  return out;
}

SummaryChain chain_from_json(const json& steps) {
  SummaryChain chain;
  for (const auto& s : steps) {
    ChainStep step;
    const std::string kind = s.value("kind", "summary");
    if (kind == "retrieve") {
      step.kind = ChainStep::Kind::retrieve;
      step.framing = {s.value("template", "{observation}"), FramingKind::query};
    } else if (kind == "summary") {
      step.kind = ChainStep::Kind::summary;
      step.framing = {s.at("template").get<std::string>(), FramingKind::summary};
      step.max_completion = s.value("max_completion", 8);
    } else {
      throw ConfigError("unknown chain step kind '" + kind + "'");
    }
    chain.steps.push_back(std::move(step));
  }
  chain.policy = {kDefaultPolicyTemplate, FramingKind::policy};
  chain.memorize = {"", FramingKind::memorize};
  return chain;
}

json trace_header_json(const Trace& trace) {
  json h;
  h["schema"] = "normlab.trace.v1";
  h["scenario"] = trace.scenario_name;
  h["seed"] = trace.seed;
  h["ticks"] = trace.ticks_requested;
  switch (trace.verbosity) {
    case Verbosity::actions: h["verbosity"] = "actions"; break;
    case Verbosity::assemblies: h["verbosity"] = "assemblies"; break;
    case Verbosity::full: h["verbosity"] = "full"; break;
  }
  h["actors"] = trace.actor_ids;
  return h;
}

void forbid_reward_keys(const json& j) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      std::string lower = key;
      std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
      if (lower.find("reward") != std::string::npos || lower == "return" ||
          lower == "payoff" || lower == "utility") {
        throw Error("trace carries a reward-like field '" + key + "'");
      }
      forbid_reward_keys(value);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) forbid_reward_keys(v);
  }
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Verbosity verbosity_from_string(const std::string& s) {
  if (s == "actions") return Verbosity::actions;
  if (s == "assemblies") return Verbosity::assemblies;
  if (s == "full") return Verbosity::full;
  throw ConfigError("unknown verbosity '" + s + "'");
}

void Scenario::validate() const {
  if (actors.empty()) throw ScenarioError("scenario needs at least one actor");
  if (horizon < 1) throw ScenarioError("horizon must be >= 1");
  std::set<std::string> ids;
  for (const auto& a : actors) {
    if (!valid_actor_id(a.id)) throw ScenarioError("invalid actor id '" + a.id + "'");
    if (!ids.insert(a.id).second) throw ScenarioError("duplicate actor id '" + a.id + "'");
    if (!backend_configs.count(a.backend_ref)) {
      throw ScenarioError("actor '" + a.id + "' references unknown backend '" +
                          a.backend_ref + "'");
    }
    if (!observation_rules.count(a.id) && !observation_rules.count("*")) {
      throw ScenarioError("no observation rules for actor '" + a.id + "'");
    }
  }
  if (transition_rules.empty() && game_master_ref.empty() && !identity_fallback) {
    throw ScenarioError("scenario needs transition rules, a game master, or the "
                        "identity fallback");
  }
  if (!game_master_ref.empty() && !backend_configs.count(game_master_ref)) {
    throw ScenarioError("unknown game master backend '" + game_master_ref + "'");
  }
  for (const auto& c : candidate_rules) {
    if (c.candidates.empty()) throw ScenarioError("candidate rule with no candidates");
  }
}

Scenario Scenario::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("schema", "") != "normlab.scenario.v1") {
    throw ScenarioError("expected schema normlab.scenario.v1");
  }
  Scenario s;
  s.name = j.value("name", "scenario");
  s.initial_state = j.at("initial_state").get<std::string>();
  s.horizon = j.value("horizon", 1);
  const json backends = j.value("backends", json::object());
  for (const auto& [ref, cfg] : backends.items()) {
    s.backend_configs[ref] = detail::backend_config_from_json(cfg);
    s.backend_corpora[ref] = cfg.value("corpus", std::vector<std::string>{});
  }
  for (const auto& a : j.at("actors")) {
    ActorSpec spec;
    spec.id = a.at("id").get<std::string>();
    spec.backend_ref = a.value("backend_ref", "shared");
    spec.memory = a.value("memory", std::vector<std::string>{});
    spec.pinned_rules = a.value("pinned_rules", std::vector<std::string>{});
    if (a.contains("chain")) spec.chain = chain_from_json(a.at("chain"));
    if (a.contains("policy_template")) {
      if (!spec.chain) spec.chain = chain_from_json(json::array());
      spec.chain->policy = {a.at("policy_template").get<std::string>(),
                            FramingKind::policy};
    }
    if (a.contains("memorize_template")) {
      if (!spec.chain) spec.chain = chain_from_json(json::array());
      spec.chain->memorize = {a.at("memorize_template").get<std::string>(),
                              FramingKind::memorize};
    }
    spec.act_mode = a.value("act_mode", std::string("argmax")) == "sample"
                        ? Actor::ActMode::sample
                        : Actor::ActMode::arg_max;
    spec.seed = a.value("seed", 0);
    s.actors.push_back(std::move(spec));
  }
  const json obs_rules = j.value("observation_rules", json::object());
  for (const auto& [actor_id, rules] : obs_rules.items()) {
    for (const auto& r : rules) {
      ObservationRule rule;
      rule.pattern = r.value("pattern", "*");
      rule.templates = templates_from_json(r);
      s.observation_rules[actor_id].push_back(std::move(rule));
    }
  }
  for (const auto& r : j.value("transition_rules", json::array())) {
    TransitionRule rule;
    rule.action_pattern = r.value("pattern", "*");
    rule.requires_in_state = r.value("requires", "");
    rule.templates = templates_from_json(r);
    rule.error_template = r.value("error_template", "");
    s.transition_rules.push_back(std::move(rule));
  }
  s.identity_fallback = j.value("identity_fallback", true);
  for (const auto& c : j.value("candidate_actions", json::array())) {
    CandidateRule rule;
    rule.pattern = c.value("pattern", "*");
    for (const auto& cand : c.at("candidates")) {
      rule.candidates.push_back(Sequence::tokenize(cand.get<std::string>()));
    }
    s.candidate_rules.push_back(std::move(rule));
  }
  s.game_master_ref = j.value("game_master", "");
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string Trace::to_jsonl() const {
  std::string out = trace_header_json(*this).dump() + "\n";
  for (const auto& t : ticks) {
    json row;
    row["tick"] = t.tick;
    row["state"] = t.state.text();
    json obs = json::object(), act = json::object(), seeds = json::object();
    for (const auto& [id, o] : t.observations) obs[id] = o.text();
    for (const auto& [id, a] : t.actions) act[id] = a.text();
    for (const auto& [id, sd] : t.seeds) seeds[id] = sd;
    row["observations"] = obs;
    row["actions"] = act;
    row["records"] = t.records;
    if (verbosity != Verbosity::actions) {
      json asm_json = json::object();
      for (const auto& [id, assemblies] : t.assemblies) {
        json list = json::array();
        for (const auto& a : assemblies) list.push_back(a.text());
        asm_json[id] = list;
      }
      row["assemblies"] = asm_json;
    }
    if (verbosity == Verbosity::full) row["seeds"] = seeds;
    out += row.dump() + "\n";
  }
  if (error) {
    out += json{{"error", *error}}.dump() + "\n";
  }
  return out;
}

Trace Trace::from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty trace");
  const json header = json::parse(line);
  if (header.value("schema", "") != "normlab.trace.v1") {
    throw Error("expected schema normlab.trace.v1");
  }
  Trace trace;
  trace.scenario_name = header.value("scenario", "");
  trace.seed = header.value("seed", std::uint64_t{0});
  trace.ticks_requested = header.value("ticks", 0);
  trace.verbosity = verbosity_from_string(header.value("verbosity", "actions"));
  trace.actor_ids = header.value("actors", std::vector<std::string>{});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    if (row.contains("error")) {
      trace.error = row.at("error").get<std::string>();
      continue;
    }
    TickRecord t;
    t.tick = row.at("tick").get<int>();
    t.state = Sequence::tokenize(row.at("state").get<std::string>());
    for (const auto& [id, o] : row.at("observations").items()) {
      t.observations[id] = Sequence::tokenize(o.get<std::string>());
    }
    for (const auto& [id, a] : row.at("actions").items()) {
      t.actions[id] = Sequence::tokenize(a.get<std::string>());
    }
    t.records = row.value("records", std::vector<std::string>{});
    if (row.contains("assemblies")) {
      for (const auto& [id, list] : row.at("assemblies").items()) {
        for (const auto& a : list) {
          t.assemblies[id].push_back(Sequence::tokenize(a.get<std::string>()));
        }
      }
    }
    if (row.contains("seeds")) {
      for (const auto& [id, sd] : row.at("seeds").items()) {
        t.seeds[id] = sd.get<std::uint64_t>();
      }
    }
    trace.ticks.push_back(std::move(t));
  }
  return trace;
}

void validate_trace_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty trace");
  const json header = json::parse(line);
  if (header.value("schema", "") != "normlab.trace.v1") {
    throw Error("trace header missing schema normlab.trace.v1");
  }
  for (const char* key : {"scenario", "seed", "ticks", "verbosity", "actors"}) {
    if (!header.contains(key)) throw Error(std::string("trace header missing '") + key + "'");
  }
  forbid_reward_keys(header);
  int expected_tick = 0;
  bool saw_error = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    forbid_reward_keys(row);
    if (row.contains("error")) {
      saw_error = true;
      continue;
    }
    if (saw_error) throw Error("tick rows after the abort record");
    for (const char* key : {"tick", "state", "observations", "actions", "records"}) {
      if (!row.contains(key)) throw Error(std::string("tick row missing '") + key + "'");
    }
    if (row.at("tick").get<int>() != expected_tick) {
      throw Error("ticks are not contiguous from zero");
    }
    ++expected_tick;
  }
  if (!saw_error && header.contains("ticks") &&
      expected_tick != header.at("ticks").get<int>()) {
    throw Error("trace is incomplete: expected " +
                std::to_string(header.at("ticks").get<int>()) + " ticks, found " +
                std::to_string(expected_tick));
  }
}

Engine::Engine(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  for (const auto& [ref, cfg] : scenario_.backend_configs) {
    Corpus corpus;
    for (const auto& line : scenario_.backend_corpora.at(ref)) {
      corpus.entries.push_back(Sequence::tokenize(line));
    }
    if (cfg.kind == BackendKind::remote) {
      backends_[ref] = make_remote_backend(cfg);
    } else {
      backends_[ref] = std::make_shared<CountBackend>(cfg, corpus);
    }
  }
}

std::shared_ptr<PatternBackend> Engine::backend(const std::string& ref) const {
  auto it = backends_.find(ref);
  if (it == backends_.end()) throw ScenarioError("unknown backend ref '" + ref + "'");
  return it->second;
}

std::vector<Actor> Engine::build_actors() const {
  std::vector<Actor> out;
  for (const auto& spec : scenario_.actors) {
    SummaryChain chain;
    if (spec.chain) {
      chain = *spec.chain;
    } else {
      chain.steps.push_back(
          {ChainStep::Kind::retrieve, {"{observation}", FramingKind::query}, 0});
      chain.policy = {kDefaultPolicyTemplate, FramingKind::policy};
      chain.memorize = {"", FramingKind::memorize};
    }
    Memory memory;
    for (const auto& entry : spec.memory) memory.append(Sequence::tokenize(entry));
    Actor actor(spec.id, backend(spec.backend_ref), chain, memory);
    for (const auto& rule : spec.pinned_rules) {
      actor.inject_explicit_norm(Sequence::tokenize(rule));
    }
    out.push_back(std::move(actor));
  }
  return out;
}

std::vector<Sequence> Engine::observe_all(const EnvState& state) const {
  std::vector<Sequence> out;
  for (const auto& spec : scenario_.actors) {
    auto it = scenario_.observation_rules.find(spec.id);
    if (it == scenario_.observation_rules.end()) {
      it = scenario_.observation_rules.find("*");
    }
    const Sequence* result = nullptr;
    Sequence rendered;
    bool matched = false;
    for (std::size_t r = 0; r < it->second.size(); ++r) {
      const ObservationRule& rule = it->second[r];
      if (rule.pattern != "*" &&
          !state.payload.contains(Sequence::tokenize(rule.pattern))) {
        continue;
      }
      const RuleTemplate& tmpl = pick_template(
          rule.templates, mix_seed(state.rng_state, state.tick, fnv1a64(spec.id), r));
      rendered = Sequence::tokenize(render_rule(
          tmpl.text, {{"state", state.payload.text()}, {"self", spec.id}}));
      result = &rendered;
      matched = true;
      break;
    }
    if (!matched) {
      throw NoMatchingRule("no observation rule matches state '" +
                           state.payload.text() + "' for actor '" + spec.id + "'");
    }
    out.push_back(*result);
  }
  return out;
}

EnvState Engine::transition(const EnvState& state,
                            const std::vector<ActionRecord>& joint,
                            std::uint64_t seed) const {
  if (joint.size() != scenario_.actors.size()) {
    throw MismatchedActors("transition needs one action per actor");
  }
  EnvState next;
  next.tick = state.tick + 1;
  next.rng_state = state.rng_state;

  std::string all_records;
  for (const auto& rec : joint) {
    if (!all_records.empty()) all_records += " ";
    all_records += rec.serialize();
  }

  for (std::size_t r = 0; r < scenario_.transition_rules.size(); ++r) {
    const TransitionRule& rule = scenario_.transition_rules[r];
    const ActionRecord* match = nullptr;
    if (rule.action_pattern == "*") {
      match = &joint.front();
    } else {
      const Sequence pattern = Sequence::tokenize(rule.action_pattern);
      for (const auto& rec : joint) {
        if (rec.action.contains(pattern)) {
          match = &rec;
          break;
        }
      }
    }
    if (!match) continue;
    const std::map<std::string, std::string> slots = {
        {"state", state.payload.text()},
        {"actor", match->actor_id},
        {"action", match->action.text()},
        {"actions", all_records}};
    if (!rule.requires_in_state.empty() &&
        !state.payload.contains(Sequence::tokenize(rule.requires_in_state)) &&
        !rule.error_template.empty()) {
      next.payload = Sequence::tokenize(render_rule(rule.error_template, slots));
      return next;
    }
    const RuleTemplate& tmpl =
        pick_template(rule.templates, mix_seed(seed, state.tick, r, 0x7a));
    next.payload = Sequence::tokenize(render_rule(tmpl.text, slots));
    return next;
  }

  if (!scenario_.game_master_ref.empty()) {
    // The storyteller narrates from plain text: records are rendered as
    // "<actor> does <action>" so the joint action reads as prose rather than
    // as precedent records.
    std::string acted;
    for (const auto& rec : joint) {
      if (!acted.empty()) acted += " | ";
      acted += rec.actor_id + " does " + rec.action.text();
    }
    const Sequence ctx = Sequence::tokenize(state.payload.text() + " | " + acted +
                                            " | narrator :");
    next.payload = backend(scenario_.game_master_ref)
                       ->sample_completion(ctx, 24, mix_seed(seed, state.tick, 0x93));
    return next;
  }
  if (scenario_.identity_fallback) {
    next.payload = state.payload;
    return next;
  }
  throw NoMatchingRule("no transition rule matches the joint action");
}

Trace Engine::run_episode(std::uint64_t seed, int ticks, Verbosity verbosity,
                          const std::vector<std::size_t>& eval_order) {
  const int horizon = ticks > 0 ? ticks : scenario_.horizon;
  std::vector<Actor> actors = build_actors();

  std::vector<std::size_t> order = eval_order;
  if (order.empty()) {
    order.resize(actors.size());
    std::iota(order.begin(), order.end(), 0);
  }
  {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expect(actors.size());
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw ConfigError("eval_order must permute the actors");
  }

  Trace trace;
  trace.scenario_name = scenario_.name;
  trace.seed = seed;
  trace.ticks_requested = horizon;
  trace.verbosity = verbosity;
  for (const auto& a : actors) trace.actor_ids.push_back(a.id());

  EnvState state;
  state.payload = Sequence::tokenize(scenario_.initial_state);
  state.tick = 0;
  state.rng_state = seed;

  for (int t = 0; t < horizon; ++t) {
    TickRecord row;
    row.tick = t;
    row.state = state.payload;
    try {
      const std::vector<Sequence> observations = observe_all(state);
      // Simultaneous move: every actor's workspace and action are computed
      // from the frozen tick inputs; memories commit only afterwards.
      std::vector<GlobalWorkspace> workspaces(actors.size());
      std::vector<Sequence> actions(actors.size());
      for (const std::size_t idx : order) {
        Actor& actor = actors[idx];
        const std::uint64_t actor_seed =
            mix_seed(seed, static_cast<std::uint64_t>(t), fnv1a64(actor.id()),
                     scenario_.actors[idx].seed);
        row.seeds[actor.id()] = actor_seed;
        workspaces[idx] = actor.run_summary_chain(observations[idx],
                                                  mix_seed(actor_seed, 1));
        const std::vector<Sequence>* candidates = nullptr;
        for (const auto& rule : scenario_.candidate_rules) {
          if (rule.pattern == "*" ||
              observations[idx].contains(Sequence::tokenize(rule.pattern))) {
            candidates = &rule.candidates;
            break;
          }
        }
        actions[idx] = actor.act(workspaces[idx], candidates, mix_seed(actor_seed, 2),
                                 scenario_.actors[idx].act_mode);
      }
      std::vector<ActionRecord> joint;
      for (std::size_t i = 0; i < actors.size(); ++i) {
        actors[i].remember(workspaces[i]);
        row.observations[actors[i].id()] = observations[i];
        row.actions[actors[i].id()] = actions[i];
        row.assemblies[actors[i].id()] = workspaces[i].assemblies;
        joint.push_back(make_record(observations[i], actors[i].id(), actions[i]));
        row.records.push_back(joint.back().serialize());
      }
      trace.ticks.push_back(std::move(row));
      state = transition(state, joint, seed);
    } catch (const Error& e) {
      trace.error = e.what();
      trace.ticks.push_back(std::move(row));
      break;
    }
  }
  return trace;
}

}  // namespace normlab
