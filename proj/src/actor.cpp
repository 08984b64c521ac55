#include "normlab/actor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "normlab/errors.hpp"

namespace normlab {

namespace {

struct Bindings {
  const Sequence* observation = nullptr;
  const std::vector<Sequence>* assemblies = nullptr;
  const Sequence* retrieved = nullptr;
  const Sequence* query = nullptr;
  const Memory* memory = nullptr;
  const std::vector<Sequence>* menu = nullptr;
  const std::string* self = nullptr;
  const Sequence* action = nullptr;
};

std::string join_pipe(const std::vector<Sequence>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " | ";
    out += parts[i].text();
  }
  return out;
}

bool placeholder_name(std::string_view name) {
  if (name == "observation" || name == "assemblies" || name == "retrieved" ||
      name == "query" || name == "memory" || name == "menu" || name == "self" ||
      name == "action") {
    return true;
  }
  if (name.rfind("assembly:", 0) == 0) {
    const auto num = name.substr(9);
    return !num.empty() && num.find_first_not_of("0123456789") == std::string::npos;
  }
  return false;
}

std::string render(const std::string& tmpl, const Bindings& b) {
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
    if (!placeholder_name(name)) {
      out.push_back(tmpl[i++]);
      continue;
    }
    auto need = [&](const auto* ptr, const char* what) {
      if (!ptr) throw MissingPlaceholder(std::string("template references {") +
                                         what + "} but it is unfilled");
    };
    if (name == "observation") {
      need(b.observation, "observation");
      out += b.observation->text();
    } else if (name == "assemblies") {
      need(b.assemblies, "assemblies");
      out += join_pipe(*b.assemblies);
    } else if (name == "retrieved") {
      need(b.retrieved, "retrieved");
      out += b.retrieved->text();
    } else if (name == "query") {
      need(b.query, "query");
      out += b.query->text();
    } else if (name == "memory") {
      need(b.memory, "memory");
      out += join_pipe(b.memory->entries);
    } else if (name == "menu") {
      if (b.menu && !b.menu->empty()) {
        out += "options : " + join_pipe(*b.menu);
      }
    } else if (name == "self") {
      need(b.self, "self");
      out += *b.self;
    } else if (name == "action") {
      need(b.action, "action");
      out += b.action->text();
    } else {  // assembly:k
      need(b.assemblies, "assembly:k");
      const std::size_t k = std::stoul(name.substr(9));
      if (k == 0 || k > b.assemblies->size()) {
        throw MissingPlaceholder("template references {" + name + "} but only " +
                                 std::to_string(b.assemblies->size()) +
                                 " assemblies are filled");
      }
      out += (*b.assemblies)[k - 1].text();
    }
    i = close + 1;
  }
  return out;
}

}  // namespace

const char* kDefaultPolicyTemplate =
    "{memory} | {assemblies} | {menu} | {observation} {self} :";

Memory lesion(const Memory& memory,
              const std::function<bool(const Sequence&)>& predicate) {
  Memory out;
  for (const auto& entry : memory.entries) {
    if (!predicate(entry)) out.append(entry);
  }
  return out;
}

double bag_cosine(const Sequence& a, const Sequence& b) {
  std::map<std::string, double> ca, cb;
  for (const auto& tok : a.tokens()) ca[tok] += 1.0;
  for (const auto& tok : b.tokens()) cb[tok] += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [tok, c] : ca) {
    na += c * c;
    auto it = cb.find(tok);
    if (it != cb.end()) dot += c * it->second;
  }
  for (const auto& [tok, c] : cb) nb += c * c;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Sequence retrieve(const Memory& memory, const Sequence& query) {
  if (memory.empty()) throw EmptyMemory("retrieve: memory is empty");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < memory.entries.size(); ++i) {
    const double s = bag_cosine(memory.entries[i], query);
    if (s >= best_score) {  // >= so later entries win ties
      best_score = s;
      best = i;
    }
  }
  return memory.entries[best];
}

void SummaryChain::validate() const {
  if (steps.empty()) throw ConfigError("summary chain must have at least one step");
  if (policy.text.empty()) throw ConfigError("summary chain requires a policy framing");
}

SummaryChain default_chain() {
  SummaryChain chain;
  chain.steps.push_back(
      {ChainStep::Kind::summary,
       {"{observation} | Question : what kind of situation is this ? | Answer :",
        FramingKind::summary},
       8});
  chain.steps.push_back(
      {ChainStep::Kind::summary,
       {"{observation} | {assemblies} | Question : what kind of person am I ? | Answer :",
        FramingKind::summary},
       8});
  chain.steps.push_back(
      {ChainStep::Kind::summary,
       {"{observation} | {assemblies} | Question : what does a person such as I do "
        "in a situation such as this ? | Answer :",
        FramingKind::summary},
       8});
  chain.policy = {kDefaultPolicyTemplate, FramingKind::policy};
  chain.memorize = {"", FramingKind::memorize};
  return chain;
}

Actor::Actor(std::string id, std::shared_ptr<PatternBackend> backend,
             SummaryChain chain, Memory memory)
    : id_(std::move(id)),
      backend_(std::move(backend)),
      chain_(std::move(chain)),
      memory_(std::move(memory)) {
  if (!valid_actor_id(id_)) throw InvalidActorId("invalid actor id: '" + id_ + "'");
  chain_.validate();
}

GlobalWorkspace Actor::run_summary_chain(const Sequence& o, std::uint64_t seed) const {
  GlobalWorkspace ws;
  ws.observation = o;
  ws.assemblies = pins_;
  const Sequence* last_retrieved = nullptr;
  Sequence last_query;
  bool have_query = false;
  for (std::size_t k = 0; k < chain_.steps.size(); ++k) {
    const ChainStep& step = chain_.steps[k];
    Bindings b;
    b.observation = &o;
    b.assemblies = &ws.assemblies;
    b.memory = &memory_;
    b.self = &id_;
    b.retrieved = last_retrieved;
    b.query = have_query ? &last_query : nullptr;
    const Sequence framed = Sequence::tokenize(render(step.framing.text, b));
    if (step.kind == ChainStep::Kind::retrieve) {
      last_query = framed;
      have_query = true;
      ws.assemblies.push_back(retrieve(memory_, framed));
      last_retrieved = &ws.assemblies.back();
    } else {
      ws.assemblies.push_back(
          backend_->sample_completion(framed, step.max_completion, mix_seed(seed, k)));
    }
  }
  return ws;
}

Sequence Actor::policy_context(const GlobalWorkspace& workspace,
                               const std::vector<Sequence>* candidates) const {
  Bindings b;
  b.observation = &workspace.observation;
  b.assemblies = &workspace.assemblies;
  b.memory = &memory_;
  b.menu = candidates;
  b.self = &id_;
  if (workspace.action) b.action = &*workspace.action;
  if (!workspace.assemblies.empty()) b.retrieved = &workspace.assemblies.back();
  return Sequence::tokenize(render(chain_.policy.text, b));
}

Sequence Actor::policy_context(const Sequence& o,
                               const std::optional<Sequence>& pinned_assembly,
                               const std::vector<Sequence>* candidates) const {
  GlobalWorkspace ws;
  ws.observation = o;
  ws.assemblies = pins_;
  if (pinned_assembly) ws.assemblies.push_back(*pinned_assembly);
  return policy_context(ws, candidates);
}

Sequence Actor::act(GlobalWorkspace& workspace,
                    const std::vector<Sequence>* candidates, std::uint64_t seed,
                    ActMode mode) const {
  Sequence action;
  if (candidates && !candidates->empty()) {
    const Sequence ctx = policy_context(workspace, candidates);
    std::vector<double> logp;
    logp.reserve(candidates->size());
    for (const auto& cand : *candidates) {
      logp.push_back(backend_->log_prob(ctx, cand));
    }
    std::size_t pick = 0;
    if (mode == ActMode::arg_max) {
      for (std::size_t i = 1; i < logp.size(); ++i) {
        if (logp[i] > logp[pick]) pick = i;
      }
    } else {
      const double mx = *std::max_element(logp.begin(), logp.end());
      std::vector<double> w(logp.size(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < logp.size(); ++i) {
        w[i] = std::isinf(mx) ? 1.0 : std::exp(logp[i] - mx);
        total += w[i];
      }
      std::mt19937_64 rng(mix_seed(seed, 0xac7u));
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
      for (std::size_t i = 0; i < w.size(); ++i) {
        u -= w[i];
        if (u < 0.0) { pick = i; break; }
      }
    }
    action = (*candidates)[pick];
  } else {
    const Sequence ctx = policy_context(workspace, nullptr);
    action = backend_->sample_completion(ctx, max_free_action, mix_seed(seed, 0xac7u));
  }
  workspace.action = action;
  return action;
}

void Actor::remember(const GlobalWorkspace& workspace) {
  if (!workspace.action) throw Error("remember: workspace has no action");
  if (chain_.memorize.text.empty()) {
    const ActionRecord rec = make_record(workspace.observation, id_, *workspace.action);
    memory_.append(Sequence::tokenize(rec.serialize()));
    return;
  }
  Bindings b;
  b.observation = &workspace.observation;
  b.assemblies = &workspace.assemblies;
  b.memory = &memory_;
  b.self = &id_;
  b.action = &*workspace.action;
  if (!workspace.assemblies.empty()) b.retrieved = &workspace.assemblies.back();
  memory_.append(Sequence::tokenize(render(chain_.memorize.text, b)));
}

Sequence Actor::step(const Sequence& o, std::uint64_t seed,
                     const std::vector<Sequence>* candidates, ActMode mode) {
  GlobalWorkspace ws = run_summary_chain(o, mix_seed(seed, 1));
  const Sequence action = act(ws, candidates, mix_seed(seed, 2), mode);
  remember(ws);
  return action;
}

void Actor::inject_explicit_norm(const Sequence& rule) {
  parse_rule(rule);  // throws MalformedRule on bad grammar
  pins_.push_back(rule);
}

bool Actor::remove_explicit_norm(const Sequence& rule) {
  auto it = std::find(pins_.begin(), pins_.end(), rule);
  if (it == pins_.end()) return false;
  pins_.erase(it);
  return true;
}

}  // namespace normlab
