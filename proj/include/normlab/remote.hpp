#pragma once

#include <memory>

#include "normlab/backend.hpp"

namespace normlab {

// Client for the remote completion protocol:
//
//   POST /v1/complete
//   request  {"context": string, "max_tokens": int, "n": int,
//             "temperature": number, "seed": int (optional),
//             "logprobs": bool}
//   response {"samples": [{"text": string,
//                          "token_logprobs": [number] (optional)}]}
//
// The endpoint and key default to NORMLAB_LLM_ENDPOINT / NORMLAB_LLM_API_KEY.
// Requests are retried on 5xx responses and transport errors; failures
// surface as RemoteUnavailable carrying the attempt count and last status.
// At most config.max_in_flight requests run concurrently.
//
// The backend is not enumerable: next_distribution and consolidate throw,
// log_prob requires the endpoint to score echoed context tokens (max_tokens
// 0 with logprobs), and kl_divergence returns a Monte-Carlo plug-in estimate
// with its standard error, never presented as exact.
class RemoteBackend : public PatternBackend {
 public:
  explicit RemoteBackend(BackendConfig config);
  ~RemoteBackend() override;

  NextSymbolDistribution next_distribution(const Sequence& context) const override;
  Sequence sample_completion(const Sequence& context, int max_len,
                             std::uint64_t seed) const override;
  double log_prob(const Sequence& context, const Sequence& continuation) const override;
  void consolidate(const Corpus& corpus) override;
  KlResult kl_divergence(const Sequence& c1, const Sequence& c2,
                         int horizon = 1) const override;
  bool enumerable() const override { return false; }
  const BackendConfig& config() const override { return config_; }

 private:
  struct Impl;
  BackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

std::shared_ptr<PatternBackend> make_remote_backend(BackendConfig config);

}  // namespace normlab
