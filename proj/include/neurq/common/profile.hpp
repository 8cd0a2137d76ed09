#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace neurq {

enum class ModelKind { RidgeRegressor, HashEmbedder, GenerativeMock };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view s);

/// Simulated cost constants of one model (or one pipeline stage).
/// Latencies are simulated milliseconds; sizes are simulated MB.
struct CostProfile {
  double load_cost = 0;       // weights load onto an engine, once per residency
  double batch_setup = 0;     // per micro-batch
  double per_item = 0;        // per item in a micro-batch
  double per_token = 0;       // per real token (token-based kinds)
  double per_pad_token = 0;   // per padding slot: Σ(max_len - len_i) of the batch
  double weight_size_mb = 0;  // resident weight footprint
  double state_mb_per_token = 0;  // KV/activation state held per token in flight

  bool operator==(const CostProfile&) const = default;
};

/// Cost of one micro-batch execution, excluding weight loading. This is
/// the single formula shared by cost estimation, the model runtime and the
/// executor's simulated clock.
inline double batch_cost(const CostProfile& p, size_t items, double tokens, double padding) {
  return p.batch_setup + p.per_item * static_cast<double>(items) + p.per_token * tokens + p.per_pad_token * padding;
}

}  // namespace neurq
