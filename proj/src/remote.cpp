#include "normlab/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <semaphore>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "normlab/errors.hpp"

namespace normlab {

namespace {

using nlohmann::json;

struct SampleResult {
  std::string text;
  std::vector<double> token_logprobs;
  bool has_logprobs = false;
};

}  // namespace

struct RemoteBackend::Impl {
  explicit Impl(const BackendConfig& cfg)
      : client(cfg.endpoint), gate(cfg.max_in_flight) {
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
  }

  std::vector<SampleResult> complete(const BackendConfig& cfg, const Sequence& context,
                                     int max_tokens, int n, double temperature,
                                     std::optional<std::uint64_t> seed,
                                     bool logprobs) {
    json req;
    req["context"] = context.text();
    req["max_tokens"] = max_tokens;
    req["n"] = n;
    req["temperature"] = temperature;
    if (seed) req["seed"] = *seed;
    req["logprobs"] = logprobs;

    httplib::Headers headers;
    if (!cfg.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + cfg.api_key);
    }

    gate.acquire();
    struct Release {
      std::counting_semaphore<>& g;
      ~Release() { g.release(); }
    } release{gate};

    int last_status = 0;
    for (int attempt = 1; attempt <= cfg.max_retries; ++attempt) {
      auto res = client.Post("/v1/complete", headers, req.dump(), "application/json");
      if (!res) {
        last_status = 0;
        continue;
      }
      last_status = res->status;
      if (res->status >= 500) continue;  // retry server errors
      if (res->status != 200) {
        throw RemoteUnavailable("remote returned status " + std::to_string(res->status),
                                attempt, res->status);
      }
      const json body = json::parse(res->body);
      std::vector<SampleResult> out;
      for (const auto& s : body.at("samples")) {
        SampleResult sample;
        sample.text = s.at("text").get<std::string>();
        if (s.contains("token_logprobs")) {
          sample.has_logprobs = true;
          for (const auto& lp : s.at("token_logprobs")) {
            sample.token_logprobs.push_back(lp.get<double>());
          }
        }
        out.push_back(std::move(sample));
      }
      return out;
    }
    throw RemoteUnavailable("remote unavailable after " +
                                std::to_string(cfg.max_retries) + " attempts",
                            cfg.max_retries, last_status);
  }

  httplib::Client client;
  std::counting_semaphore<> gate;
};

RemoteBackend::RemoteBackend(BackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) {
    if (const char* env = std::getenv("NORMLAB_LLM_ENDPOINT")) config_.endpoint = env;
  }
  if (config_.api_key.empty()) {
    if (const char* env = std::getenv("NORMLAB_LLM_API_KEY")) config_.api_key = env;
  }
  config_.kind = BackendKind::remote;
  config_.validate();
  impl_ = std::make_unique<Impl>(config_);
}

RemoteBackend::~RemoteBackend() = default;

NextSymbolDistribution RemoteBackend::next_distribution(const Sequence&) const {
  throw NotEnumerable(
      "remote backend cannot enumerate next-symbol distributions; use the "
      "sampling estimators");
}

void RemoteBackend::consolidate(const Corpus&) {
  throw NotSupported("remote backend cannot be consolidated");
}

Sequence RemoteBackend::sample_completion(const Sequence& context, int max_len,
                                          std::uint64_t seed) const {
  if (max_len < 1) throw ConfigError("sample_completion: max_len must be >= 1");
  const auto samples =
      impl_->complete(config_, context, max_len, 1, 1.0, seed, false);
  if (samples.empty()) throw RemoteUnavailable("remote returned no samples", 1, 200);
  return Sequence::tokenize(samples.front().text);
}

double RemoteBackend::log_prob(const Sequence& context,
                               const Sequence& continuation) const {
  if (continuation.empty()) return 0.0;
  Sequence full = context;
  full.append(continuation);
  const auto samples = impl_->complete(config_, full, 0, 1, 1.0, std::nullopt, true);
  if (samples.empty() || !samples.front().has_logprobs ||
      samples.front().token_logprobs.size() < continuation.size()) {
    throw NotSupported("remote endpoint does not score continuation tokens");
  }
  const auto& lps = samples.front().token_logprobs;
  double sum = 0.0;
  for (std::size_t i = lps.size() - continuation.size(); i < lps.size(); ++i) {
    sum += lps[i];
  }
  return sum;
}

KlResult RemoteBackend::kl_divergence(const Sequence& c1, const Sequence& c2,
                                      int horizon) const {
  if (horizon != 1) {
    throw NotSupported("remote Monte-Carlo KL is defined for horizon 1");
  }
  if (c1 == c2) return KlResult{0.0, 0.0, true};  // identical contexts, exactly
  const int n = config_.mc_samples;
  const auto from_p = impl_->complete(config_, c1, 1, n, 1.0, 17, true);
  const auto from_q = impl_->complete(config_, c2, 1, n, 1.0, 18, true);
  if (from_p.empty()) throw RemoteUnavailable("remote returned no samples", 1, 200);

  const double floor_logp = std::log(1.0 / (2.0 * n));
  const bool scored = from_p.front().has_logprobs && !from_q.empty() &&
                      from_q.front().has_logprobs;

  std::map<std::string, double> q_logprob;
  std::map<std::string, int> q_count;
  for (const auto& s : from_q) {
    q_count[s.text] += 1;
    if (s.has_logprobs && !s.token_logprobs.empty()) {
      q_logprob[s.text] = s.token_logprobs.front();
    }
  }
  std::map<std::string, int> p_count;
  for (const auto& s : from_p) p_count[s.text] += 1;

  // Plug-in estimate of E_p[log p - log q] over the drawn samples.
  std::vector<double> terms;
  terms.reserve(from_p.size());
  for (const auto& s : from_p) {
    double lp;
    if (scored && s.has_logprobs && !s.token_logprobs.empty()) {
      lp = s.token_logprobs.front();
    } else {
      lp = std::log(static_cast<double>(p_count[s.text]) / from_p.size());
    }
    double lq;
    auto it = q_logprob.find(s.text);
    if (scored && it != q_logprob.end()) {
      lq = it->second;
    } else if (q_count.count(s.text)) {
      lq = std::log(static_cast<double>(q_count[s.text]) / from_q.size());
    } else {
      lq = floor_logp;
    }
    terms.push_back(lp - lq);
  }
  double mean = 0.0;
  for (const double t : terms) mean += t;
  mean /= static_cast<double>(terms.size());
  double var = 0.0;
  for (const double t : terms) var += (t - mean) * (t - mean);
  var /= std::max<double>(1.0, static_cast<double>(terms.size()) - 1.0);

  KlResult out;
  out.value = mean;
  out.std_error = std::sqrt(var / static_cast<double>(terms.size()));
  out.exact = false;
  return out;
}

std::shared_ptr<PatternBackend> make_remote_backend(BackendConfig config) {
  return std::make_shared<RemoteBackend>(std::move(config));
}

}  // namespace normlab
