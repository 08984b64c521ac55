#include "normlab/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "normlab/errors.hpp"

namespace normlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const std::string kCtxSep = "\x1f";

std::string ngram_key(const std::vector<std::string>& toks, std::size_t end,
                      int order) {
  // Key = the (order-1)-token window ending just before `end`, BOS-padded.
  std::string key;
  for (int back = order - 1; back >= 1; --back) {
    const std::string& t =
        (end >= static_cast<std::size_t>(back)) ? toks[end - back] : kBos;
    if (!key.empty()) key += kCtxSep;
    key += t;
  }
  return key;
}

}  // namespace

double NextSymbolDistribution::prob(const std::string& token) const {
  for (const auto& [tok, p] : support) {
    if (tok == token) return p;
  }
  return 0.0;
}

double NextSymbolDistribution::total() const {
  double s = 0.0;
  for (const auto& [tok, p] : support) s += p;
  return s;
}

void NextSymbolDistribution::validate() const {
  for (const auto& [tok, p] : support) {
    if (p < 0.0) throw Error("negative probability for symbol '" + tok + "'");
  }
  if (std::abs(total() - 1.0) > 1e-12) {
    throw Error("distribution does not normalize: total=" + std::to_string(total()));
  }
}

void BackendConfig::validate() const {
  if (kind == BackendKind::remote) {
    if (endpoint.empty()) throw ConfigError("remote backend requires an endpoint");
    return;
  }
  if (ngram_order < 1) throw ConfigError("ngram_order must be >= 1");
  if (smoothing_lambda < 0.0) throw ConfigError("smoothing_lambda must be >= 0");
  if (sanction_discount <= 0.0 || sanction_discount > 1.0) {
    throw ConfigError("sanction_discount must be in (0,1]");
  }
  if (sanction_boost < 1.0) throw ConfigError("sanction_boost must be >= 1");
  if (rule_discount <= 0.0 || rule_discount > 1.0) {
    throw ConfigError("rule_discount must be in (0,1]");
  }
}

ContextRule parse_rule(const Sequence& rule) {
  const auto& t = rule.tokens();
  if (t.size() < 4 || t[0] != "RULE" || t[1] != ":" ||
      (t[2] != "avoid" && t[2] != "prefer")) {
    throw MalformedRule("rule must be 'RULE: avoid <action>' or 'RULE: prefer <action>', got '" +
                        rule.text() + "'");
  }
  ContextRule out;
  out.avoid = (t[2] == "avoid");
  out.action = Sequence(std::vector<std::string>(t.begin() + 3, t.end()));
  return out;
}

bool is_rule(const Sequence& seq) {
  const auto& t = seq.tokens();
  return t.size() >= 4 && t[0] == "RULE" && t[1] == ":" &&
         (t[2] == "avoid" || t[2] == "prefer");
}

CountBackend::CountBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.kind == BackendKind::remote) {
    throw ConfigError("CountBackend does not implement the remote kind");
  }
  // The rule grammar keywords and the sanction lexicons are part of the
  // model: they stay in the smoothing vocabulary whether or not they have
  // appeared yet, which keeps negative-control comparisons exact when a rule
  // or sanction is introduced.
  for (const char* tok : {"RULE", "avoid", "prefer", "options"}) vocab_[tok] += 0.0;
  for (const auto& s : config_.negative_sanctions) {
    for (const auto& tok : s.tokens()) vocab_[tok] += 0.0;
  }
  for (const auto& s : config_.positive_sanctions) {
    for (const auto& tok : s.tokens()) vocab_[tok] += 0.0;
  }
  for (const auto& tok : config_.base_vocabulary) vocab_[tok] += 0.0;
}

CountBackend::CountBackend(BackendConfig config, const Corpus& corpus)
    : CountBackend(std::move(config)) {
  consolidate(corpus);
}

void CountBackend::ingest_text(const Sequence& entry) {
  const auto& toks = entry.tokens();
  for (std::size_t i = 0; i <= toks.size(); ++i) {
    const std::string target = (i < toks.size()) ? toks[i] : kEos;
    ngram_[ngram_key(toks, i, config_.ngram_order)][target] += 1.0;
  }
}

void CountBackend::ingest_record(const ParsedRecord& record) {
  Precedent p;
  p.observation = record.observation;
  p.action = record.clauses.front().second;
  for (std::size_t i = 1; i < record.clauses.size(); ++i) {
    const Sequence& s = record.clauses[i].second;
    for (const auto& neg : config_.negative_sanctions) {
      if (s == neg) { ++p.negative; }
    }
    for (const auto& pos : config_.positive_sanctions) {
      if (s == pos) { ++p.positive; }
    }
  }
  for (auto& existing : store_) {
    if (existing.observation == p.observation && existing.action == p.action &&
        existing.negative == p.negative && existing.positive == p.positive) {
      existing.count += 1.0;
      return;
    }
  }
  store_.push_back(std::move(p));
}

void CountBackend::consolidate(const Corpus& corpus) {
  std::unique_lock lock(mutex_);
  for (const auto& entry : corpus.entries) {
    for (const auto& tok : entry.tokens()) vocab_[tok] += 1.0;
    auto rec = parse_record(entry.text());
    if (rec) {
      ingest_record(*rec);
    } else {
      ingest_text(entry);
    }
  }
}

CountBackend::ParsedContext CountBackend::parse_context(const Sequence& context) const {
  ParsedContext out;
  const auto spans = scan_records(context);
  const auto& toks = context.tokens();

  // Plain segments: everything outside records, split at '|'.
  std::vector<Sequence> segments;
  Sequence current;
  std::size_t span_idx = 0;
  for (std::size_t i = 0; i < toks.size();) {
    if (span_idx < spans.size() && spans[span_idx].begin == i) {
      const ParsedRecord& rec = spans[span_idx].record;
      Precedent p;
      p.observation = rec.observation;
      p.action = rec.clauses.front().second;
      for (std::size_t ci = 1; ci < rec.clauses.size(); ++ci) {
        const Sequence& s = rec.clauses[ci].second;
        for (const auto& neg : config_.negative_sanctions) {
          if (s == neg) ++p.negative;
        }
        for (const auto& pos : config_.positive_sanctions) {
          if (s == pos) ++p.positive;
        }
      }
      out.precedents.push_back(std::move(p));
      i = spans[span_idx].end;
      ++span_idx;
      continue;
    }
    if (toks[i] == "|") {
      segments.push_back(std::move(current));
      current = Sequence();
    } else {
      current.push_back(toks[i]);
    }
    ++i;
  }
  segments.push_back(std::move(current));

  for (std::size_t s = 0; s < segments.size(); ++s) {
    Sequence& seg = segments[s];
    if (seg.empty()) continue;
    if (is_rule(seg)) {
      out.rules.push_back(parse_rule(seg));
      continue;
    }
    const bool last = (s + 1 == segments.size());
    if (last) {
      // Emission prompt: [obs tokens] <id> : [partial action tokens].
      const auto& st = seg.tokens();
      for (std::size_t ci = 0; ci < st.size(); ++ci) {
        if (st[ci] != ":" || ci == 0) continue;
        if (!valid_actor_id(st[ci - 1])) break;
        out.emission = true;
        out.emitter_id = st[ci - 1];
        out.query.append(
            Sequence(std::vector<std::string>(st.begin(), st.begin() + ci - 1)));
        out.partial =
            Sequence(std::vector<std::string>(st.begin() + ci + 1, st.end()));
        break;
      }
      if (!out.emission) out.query.append(seg);
    } else {
      out.query.append(seg);
    }
  }
  return out;
}

std::vector<std::string> CountBackend::active_vocabulary(const Sequence& context) const {
  std::set<std::string> v;
  for (const auto& [tok, cnt] : vocab_) v.insert(tok);
  for (const auto& tok : context.tokens()) v.insert(tok);
  return {v.begin(), v.end()};
}

double CountBackend::precedent_weight(const Precedent& p,
                                      const std::vector<ContextRule>& rules) const {
  double w = p.count;
  if (config_.kind == BackendKind::table) return w;
  if (config_.sanction_discount != 1.0 && p.negative > 0) {
    w *= std::pow(config_.sanction_discount, p.negative);
  }
  if (config_.sanction_boost != 1.0 && p.positive > 0) {
    w *= std::pow(config_.sanction_boost, p.positive);
  }
  if (config_.rule_discount != 1.0) {
    for (const auto& rule : rules) {
      if (rule.action == p.action) {
        w *= rule.avoid ? config_.rule_discount : 1.0 / config_.rule_discount;
      }
    }
  }
  return w;
}

NextSymbolDistribution CountBackend::precedent_distribution(
    const ParsedContext& parsed, const std::vector<std::string>& vocab) const {
  // Matching precedents: observation occurs contiguously in the query text.
  std::map<std::string, double> mass;
  double eos_mass = 0.0;
  double active_total = 0.0;
  bool any_match = false;
  auto consider = [&](const Precedent& p) {
    if (!p.observation.empty() && !parsed.query.contains(p.observation)) return;
    any_match = true;
    if (!p.action.starts_with(parsed.partial)) return;
    const double w = precedent_weight(p, parsed.rules);
    active_total += w;
    if (p.action.size() == parsed.partial.size()) {
      eos_mass += w;
    } else {
      mass[p.action[parsed.partial.size()]] += w;
    }
  };
  for (const auto& p : store_) consider(p);
  for (const auto& p : parsed.precedents) consider(p);

  if (!any_match) {
    // Signals the caller to fall back to the table layer.
    return NextSymbolDistribution{};
  }

  const double lambda = config_.smoothing_lambda;
  NextSymbolDistribution dist;
  const double denom = active_total + lambda * (static_cast<double>(vocab.size()) + 1.0);
  if (denom <= 0.0) {
    throw Error("precedent distribution has no probability mass and no smoothing");
  }
  if (lambda > 0.0) {
    dist.floor_mass = lambda / denom;
    dist.full_support = true;
    for (const auto& tok : vocab) {
      auto it = mass.find(tok);
      const double m = (it == mass.end()) ? 0.0 : it->second;
      dist.support.emplace_back(tok, (m + lambda) / denom);
    }
    dist.support.emplace_back(kEos, (eos_mass + lambda) / denom);
  } else {
    dist.floor_mass = 0.0;
    dist.full_support = false;
    for (const auto& [tok, m] : mass) {
      if (m > 0.0) dist.support.emplace_back(tok, m / denom);
    }
    if (eos_mass > 0.0) dist.support.emplace_back(kEos, eos_mass / denom);
    if (dist.support.empty()) {
      throw Error("precedent distribution has no probability mass and no smoothing");
    }
  }
  return dist;
}

NextSymbolDistribution CountBackend::table_distribution(
    const Sequence& context, const std::vector<std::string>& vocab) const {
  const std::string key =
      ngram_key(context.tokens(), context.size(), config_.ngram_order);
  static const std::map<std::string, double> kEmpty;
  auto it = ngram_.find(key);
  const auto& counts = (it == ngram_.end()) ? kEmpty : it->second;
  double total = 0.0;
  for (const auto& [tok, c] : counts) total += c;

  const double lambda = config_.smoothing_lambda;
  const double denom = total + lambda * (static_cast<double>(vocab.size()) + 1.0);
  NextSymbolDistribution dist;
  if (denom <= 0.0) {
    throw Error("table distribution has no counts for context and no smoothing");
  }
  auto count_of = [&](const std::string& tok) {
    auto cit = counts.find(tok);
    return (cit == counts.end()) ? 0.0 : cit->second;
  };
  if (lambda > 0.0) {
    dist.floor_mass = lambda / denom;
    dist.full_support = true;
    for (const auto& tok : vocab) {
      dist.support.emplace_back(tok, (count_of(tok) + lambda) / denom);
    }
    dist.support.emplace_back(kEos, (count_of(kEos) + lambda) / denom);
  } else {
    dist.floor_mass = 0.0;
    dist.full_support = false;
    for (const auto& [tok, c] : counts) {
      if (c <= 0.0) continue;
      if (tok == kEos) continue;
      dist.support.emplace_back(tok, c / denom);
    }
    const double eos_c = count_of(kEos);
    if (eos_c > 0.0) dist.support.emplace_back(kEos, eos_c / denom);
    if (dist.support.empty()) {
      throw Error("table distribution has no counts for context and no smoothing");
    }
  }
  return dist;
}

NextSymbolDistribution CountBackend::next_distribution(const Sequence& context) const {
  std::shared_lock lock(mutex_);
  const auto vocab = active_vocabulary(context);
  const auto parsed = parse_context(context);
  if (parsed.emission) {
    auto dist = precedent_distribution(parsed, vocab);
    if (!dist.support.empty()) return dist;
  }
  return table_distribution(context, vocab);
}

double CountBackend::log_prob(const Sequence& context, const Sequence& continuation) const {
  double sum = 0.0;
  Sequence ctx = context;
  for (const auto& tok : continuation.tokens()) {
    const double p = next_distribution(ctx).prob(tok);
    if (p <= 0.0) return -kInf;
    sum += std::log(p);
    ctx.push_back(tok);
  }
  return sum;
}

Sequence CountBackend::sample_completion(const Sequence& context, int max_len,
                                         std::uint64_t seed) const {
  if (max_len < 1) throw ConfigError("sample_completion: max_len must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, 0x5eedu));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Sequence out;
  Sequence ctx = context;
  for (int i = 0; i < max_len; ++i) {
    const auto dist = next_distribution(ctx);
    const double u = unif(rng) * dist.total();
    double acc = 0.0;
    std::string pick = dist.support.back().first;
    for (const auto& [tok, p] : dist.support) {
      acc += p;
      if (u < acc) { pick = tok; break; }
    }
    if (pick == kEos) break;
    out.push_back(pick);
    ctx.push_back(pick);
  }
  return out;
}

double CountBackend::kl_horizon(const Sequence& c1, const Sequence& c2,
                                int horizon) const {
  std::size_t ops = 0;
  // Enumerates the tree of completions of length <= horizon; a branch is a
  // leaf when it emits EOS or reaches the horizon.
  std::function<double(const Sequence&, const Sequence&, double, double, int)> go =
      [&](const Sequence& p1, const Sequence& p2, double pacc, double qacc,
          int depth) -> double {
    if (pacc == 0.0) return 0.0;
    const auto d1 = next_distribution(p1);
    const auto d2 = next_distribution(p2);
    if (++ops > config_.enumeration_budget) {
      throw VocabularyTooLarge("kl_divergence enumeration exceeds budget");
    }
    std::set<std::string> tokens;
    for (const auto& [tok, p] : d1.support) tokens.insert(tok);
    for (const auto& [tok, p] : d2.support) tokens.insert(tok);
    double sum = 0.0;
    for (const auto& tok : tokens) {
      const double p = pacc * d1.prob(tok);
      const double q = qacc * d2.prob(tok);
      if (tok == kEos || depth + 1 == horizon) {
        if (p > 0.0) {
          if (q <= 0.0) return kInf;
          sum += p * std::log(p / q);
        }
        continue;
      }
      Sequence n1 = p1, n2 = p2;
      n1.push_back(tok);
      n2.push_back(tok);
      const double sub = go(n1, n2, p, q, depth + 1);
      if (std::isinf(sub)) return kInf;
      sum += sub;
    }
    return sum;
  };
  return go(c1, c2, 1.0, 1.0, 0);
}

KlResult CountBackend::kl_divergence(const Sequence& c1, const Sequence& c2,
                                     int horizon) const {
  if (horizon < 1) throw ConfigError("kl_divergence: horizon must be >= 1");
  if (horizon == 1) {
    const auto d1 = next_distribution(c1);
    const auto d2 = next_distribution(c2);
    double sum = 0.0;
    for (const auto& [tok, p] : d1.support) {
      if (p <= 0.0) continue;
      const double q = d2.prob(tok);
      if (q <= 0.0) return KlResult{kInf, 0.0, true};
      sum += p * std::log(p / q);
    }
    return KlResult{sum, 0.0, true};
  }
  return KlResult{kl_horizon(c1, c2, horizon), 0.0, true};
}

std::string CountBackend::snapshot() const {
  std::shared_lock lock(mutex_);
  nlohmann::json j;
  j["schema"] = "normlab.backend.v1";
  j["vocab"] = vocab_;
  nlohmann::json grams = nlohmann::json::object();
  for (const auto& [key, counts] : ngram_) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [tok, c] : counts) row[tok] = c;
    grams[key] = row;
  }
  j["ngram"] = grams;
  nlohmann::json precedents = nlohmann::json::array();
  for (const auto& p : store_) {
    precedents.push_back({{"observation", p.observation.text()},
                          {"action", p.action.text()},
                          {"negative", p.negative},
                          {"positive", p.positive},
                          {"count", p.count}});
  }
  j["precedents"] = precedents;
  return j.dump();
}

void CountBackend::restore(const std::string& snapshot_json) {
  std::unique_lock lock(mutex_);
  const auto j = nlohmann::json::parse(snapshot_json);
  if (j.value("schema", "") != "normlab.backend.v1") {
    throw Error("unknown backend snapshot schema");
  }
  vocab_.clear();
  ngram_.clear();
  store_.clear();
  for (const auto& [tok, c] : j.at("vocab").items()) vocab_[tok] = c.get<double>();
  for (const auto& [key, counts] : j.at("ngram").items()) {
    for (const auto& [tok, c] : counts.items()) ngram_[key][tok] = c.get<double>();
  }
  for (const auto& p : j.at("precedents")) {
    Precedent out;
    out.observation = Sequence::tokenize(p.at("observation").get<std::string>());
    out.action = Sequence::tokenize(p.at("action").get<std::string>());
    out.negative = p.at("negative").get<int>();
    out.positive = p.at("positive").get<int>();
    out.count = p.at("count").get<double>();
    store_.push_back(std::move(out));
  }
}

std::vector<std::string> CountBackend::trained_vocabulary() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  out.reserve(vocab_.size());
  for (const auto& [tok, c] : vocab_) out.push_back(tok);
  return out;
}

std::unique_ptr<PatternBackend> make_count_backend(const BackendConfig& config,
                                                   const Corpus& corpus) {
  return std::make_unique<CountBackend>(config, corpus);
}

}  // namespace normlab
