#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "neurq/cache/cache_manager.hpp"
#include "neurq/catalog/catalog.hpp"
#include "neurq/common/profile.hpp"
#include "neurq/common/types.hpp"

namespace neurq {

enum class PipelineVariant { Direct, Staged };
std::string_view to_string(PipelineVariant v);

/// Row-major dense matrix.
struct DenseMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

/// Closed-form ridge regression with an unpenalized intercept.
/// Returns d slopes followed by the intercept.
std::vector<double> train_ridge(const DenseMatrix& features, const std::vector<double>& target, double lambda);

/// L2-normalized sum of hashed token one-hots. Empty text maps to the zero vector.
Vector embed_text(const std::string& text, size_t dim);
std::vector<Vector> embed(const std::vector<std::string>& texts, size_t dim = 64);
size_t whitespace_token_count(const std::string& text);

/// Numeric encoding of feature values: numbers and bools pass through,
/// text is feature-hashed into `hash_buckets` one-hot slots.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(std::vector<std::string> names, std::vector<ColumnType> types, size_t hash_buckets = 32);

  size_t width() const { return width_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ColumnType>& types() const { return types_; }
  size_t hash_buckets() const { return buckets_; }
  /// Encoded dimensions owned by the named columns.
  std::vector<size_t> dims_of(const std::vector<std::string>& columns) const;
  void encode(const Row& features, double* out) const;

 private:
  std::vector<std::string> names_;
  std::vector<ColumnType> types_;
  std::vector<size_t> offsets_;
  size_t buckets_ = 32;
  size_t width_ = 0;
};

/// Ridge model that keeps its centered sufficient statistics so any
/// column subset can be re-solved in closed form.
struct RidgeModel {
  FeatureEncoder encoder;
  double lambda = 1.0;
  std::vector<double> weights;  // encoded-width slopes
  double intercept = 0;
  // Sufficient statistics over the training set.
  size_t n = 0;
  std::vector<double> mean_x;
  double mean_y = 0;
  std::vector<double> gram;  // centered X'X, width × width row-major
  std::vector<double> xty;   // centered X'y
  std::vector<std::string> mask;  // feature columns the weights use
  std::vector<size_t> active_dims;  // encoded dims of `mask`

  double predict(const Row& features) const;
  static RidgeModel fit(const FeatureEncoder& encoder, const std::vector<Row>& features, const std::vector<double>& target,
                        double lambda);
  /// Re-solves on the dims of `columns` only; other weights become zero.
  RidgeModel restrict_to(const std::vector<std::string>& columns) const;
};

/// Staged inference: base-model selection → relation modeling → fusion.
struct StagedRidge {
  RidgeModel base;      // best-profiled mask variant
  RidgeModel relation;  // base features + key target-encoding feature
  std::vector<double> key_bucket_mean;
  std::vector<uint32_t> key_bucket_count;
  double global_mean = 0;

  double predict(const Row& features, const Value& key) const;
  double key_feature(const Value& key) const;
};

struct LoadedModel {
  ModelKind kind = ModelKind::RidgeRegressor;
  std::vector<std::string> feature_names;
  CostProfile cost;
  std::vector<CostProfile> staged_cost;
  std::optional<RidgeModel> ridge;
  std::optional<StagedRidge> staged;
  size_t embed_dim = 64;
  uint64_t seed = 0;
};

struct InferenceInput {
  Row features;  // values in model feature order
  Value key;     // primary-key value of the row
  size_t length = 1;  // tokens for text kinds, feature count otherwise
};

struct InferResult {
  std::vector<Value> predictions;
  double cost_ms = 0;
  double tokens = 0;   // Σ real tokens charged
  double padding = 0;  // Σ(max_len − len_i)
};

struct ProfileConfig {
  size_t embed_dim = 64;
  size_t hash_buckets = 32;
  double lambda = 1.0;
  uint64_t seed = 42;
  double generative_expansion = 1.0;
  /// Every `holdout_stride`-th row is held out when profiling.
  size_t holdout_stride = 5;
};

struct SliceResult {
  std::shared_ptr<const LoadedModel> model;
  bool cache_hit = false;
  double cost_ms = 0;  // closed-form re-solve cost; zero on a cache hit
};

/// Lengths of a batch padded to its longest item.
double padding_of(const std::vector<size_t>& lengths);

/// Deterministic mock AI backends. Pure given inputs, seed and config;
/// safe to call concurrently.
class ModelRuntime {
 public:
  ModelRuntime(Catalog& catalog, CacheManager* cache, ProfileConfig config = {});

  const ProfileConfig& config() const { return config_; }

  /// Trains a registered-model record (CREATE MODEL) on `training`, whose
  /// columns are `features` followed by the target. Weights, staged
  /// artifacts and holdout quality for both variants are filled in.
  ModelRecord fit_record(const std::string& name, ModelKind kind, const std::vector<TableColumn>& features,
                         const std::optional<TableColumn>& target, const RowSet& training,
                         const CostProfile& cost, const std::vector<CostProfile>& staged_cost) const;

  /// In-query training (AI-Train) on rows whose first columns are the
  /// features followed by the target, with the primary key last.
  std::shared_ptr<const LoadedModel> train_inline(const std::vector<std::string>& names,
                                                  const std::vector<ColumnType>& types, const RowSet& rows,
                                                  PipelineVariant variant, const CostProfile& cost,
                                                  const std::vector<CostProfile>& staged_cost) const;

  std::shared_ptr<const LoadedModel> load(const ModelRecord& record) const;

  InferResult infer(const LoadedModel& model, const std::vector<InferenceInput>& batch,
                    PipelineVariant variant = PipelineVariant::Direct) const;

  /// Holdout quality max(0, 1 − RMSE/std(target)) for ridge models;
  /// recorded into the catalog when `record` is given.
  double profile(const LoadedModel& model, const std::vector<InferenceInput>& holdout, const std::vector<double>& targets,
                 PipelineVariant variant = PipelineVariant::Direct, const ModelRecord* record = nullptr) const;

  SliceResult slice_for_mask(const ModelRecord& record, const std::vector<std::string>& permitted) const;

  /// Profiles the `mask` variant of a registered model on a holdout drawn
  /// from its training table at the current version, for both pipeline
  /// variants, and records the estimates. Returns the direct quality.
  double profile_mask(const ModelRecord& record, const std::vector<std::string>& mask) const;

  /// Time a batch of `lengths` takes with `variant`, excluding loads.
  static double simulated_cost(const LoadedModel& model, PipelineVariant variant, size_t items, double tokens,
                               double padding);

 private:
  StagedRidge fit_staged(const FeatureEncoder& encoder, const std::vector<Row>& features, const std::vector<Value>& keys,
                         const std::vector<double>& target) const;

  Catalog& catalog_;
  CacheManager* cache_;
  ProfileConfig config_;

  mutable std::mutex loaded_mu_;
  mutable std::map<ModelRef, std::shared_ptr<const LoadedModel>> loaded_;
};

std::string serialize_model(const LoadedModel& model);
LoadedModel deserialize_model(const std::string& payload);

}  // namespace neurq
