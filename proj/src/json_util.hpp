#pragma once

#include <string>

#include <json.hpp>

#include "normlab/backend.hpp"
#include "normlab/errors.hpp"

namespace normlab::detail {

inline BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "table") return BackendKind::table;
  if (s == "weighted") return BackendKind::weighted;
  if (s == "remote") return BackendKind::remote;
  throw ConfigError("unknown backend kind '" + s + "'");
}

inline BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig cfg;
  cfg.kind = backend_kind_from_string(j.value("kind", "table"));
  cfg.ngram_order = j.value("ngram_order", 2);
  cfg.smoothing_lambda = j.value("smoothing_lambda", 0.5);
  cfg.sanction_discount = j.value("sanction_discount", 1.0);
  cfg.sanction_boost = j.value("sanction_boost", 1.0);
  cfg.rule_discount = j.value("rule_discount", 1.0);
  for (const auto& s : j.value("negative_sanctions", std::vector<std::string>{})) {
    cfg.negative_sanctions.push_back(Sequence::tokenize(s));
  }
  for (const auto& s : j.value("positive_sanctions", std::vector<std::string>{})) {
    cfg.positive_sanctions.push_back(Sequence::tokenize(s));
  }
  cfg.base_vocabulary = j.value("base_vocabulary", std::vector<std::string>{});
  cfg.enumeration_budget = j.value("enumeration_budget", std::size_t{200000});
  cfg.endpoint = j.value("endpoint", "");
  cfg.api_key = j.value("api_key", "");
  cfg.mc_samples = j.value("mc_samples", 256);
  cfg.max_retries = j.value("max_retries", 3);
  cfg.max_in_flight = j.value("max_in_flight", 4);
  cfg.validate();
  return cfg;
}

}  // namespace normlab::detail
