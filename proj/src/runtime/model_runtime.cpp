#include "neurq/runtime/model_runtime.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "neurq/common/error.hpp"
#include "neurq/common/hash.hpp"

namespace neurq {

namespace {

constexpr size_t kKeyBuckets = 32;
constexpr const char* kKeyFeature = "__key_te";

std::vector<size_t> solve_dims(const std::vector<double>& gram, const std::vector<double>& xty, size_t width,
                               const std::vector<size_t>& dims, double lambda, std::vector<double>& weights) {
  const auto k = static_cast<Eigen::Index>(dims.size());
  Eigen::MatrixXd a(k, k);
  Eigen::VectorXd b(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    b(i) = xty[dims[i]];
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = gram[dims[i] * width + dims[j]];
    a(i, i) += lambda;
  }
  Eigen::VectorXd w = a.ldlt().solve(b);
  weights.assign(width, 0.0);
  for (Eigen::Index i = 0; i < k; ++i) weights[dims[i]] = w(i);
  return dims;
}

double uniform_from(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double rmse_quality(const std::vector<double>& pred, const std::vector<double>& target) {
  if (target.empty()) fail(ErrorCode::DegenerateInput, "empty holdout");
  const double n = static_cast<double>(target.size());
  const double mean = std::accumulate(target.begin(), target.end(), 0.0) / n;
  double var = 0, sse = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    var += (target[i] - mean) * (target[i] - mean);
    sse += (pred[i] - target[i]) * (pred[i] - target[i]);
  }
  const double sd = std::sqrt(var / n);
  const double rmse = std::sqrt(sse / n);
  if (sd == 0) return rmse == 0 ? 1.0 : 0.0;
  return std::max(0.0, 1.0 - rmse / sd);
}

struct Holdout {
  std::vector<Row> fx, hx;
  std::vector<double> fy, hy;
  std::vector<Value> fk, hk;
};

/// Every stride-th row is held out; tiny inputs profile on the fit rows.
Holdout split_holdout(const std::vector<Row>& x, const std::vector<double>& y, const std::vector<Value>& keys,
                      size_t holdout_stride) {
  const size_t stride = std::max<size_t>(2, holdout_stride);
  Holdout h;
  for (size_t i = 0; i < x.size(); ++i) {
    const bool hold = x.size() >= 2 * stride && i % stride == stride - 1;
    (hold ? h.hx : h.fx).push_back(x[i]);
    (hold ? h.hy : h.fy).push_back(y[i]);
    (hold ? h.hk : h.fk).push_back(keys[i]);
  }
  if (h.hx.empty()) {
    h.hx = h.fx;
    h.hy = h.fy;
    h.hk = h.fk;
  }
  return h;
}

/// Restricts a ridge model and its staged pipeline to `mask`.
void restrict_model(LoadedModel& m, const std::vector<std::string>& mask) {
  if (m.kind != ModelKind::RidgeRegressor) return;
  m.ridge = m.ridge->restrict_to(mask);
  if (m.staged) {
    StagedRidge s = *m.staged;
    std::vector<std::string> base_mask;
    for (const auto& f : s.base.mask)
      if (std::find(mask.begin(), mask.end(), f) != mask.end()) base_mask.push_back(f);
    s.base = s.base.restrict_to(base_mask.empty() ? mask : base_mask);
    auto rel = s.base.mask;
    rel.push_back(kKeyFeature);
    s.relation = s.relation.restrict_to(rel);
    m.staged = std::move(s);
  }
}

}  // namespace

std::string_view to_string(PipelineVariant v) { return v == PipelineVariant::Direct ? "direct" : "staged"; }

std::vector<double> train_ridge(const DenseMatrix& x, const std::vector<double>& y, double lambda) {
  if (x.rows == 0) fail(ErrorCode::DegenerateInput, "ridge needs at least one row");
  if (y.size() != x.rows) fail(ErrorCode::ArityMismatch, "target length differs from row count");
  if (!(lambda > 0)) fail(ErrorCode::InvalidArgument, "ridge lambda must be positive");
  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto d = static_cast<Eigen::Index>(x.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(x.data.data(), n, d);
  Eigen::Map<const Eigen::VectorXd> t(y.data(), n);
  const Eigen::RowVectorXd mx = m.colwise().mean();
  const double my = t.mean();
  const Eigen::MatrixXd xc = m.rowwise() - mx;
  const Eigen::VectorXd yc = t.array() - my;
  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += lambda;
  const Eigen::VectorXd w = a.ldlt().solve(xc.transpose() * yc);
  std::vector<double> out(w.data(), w.data() + d);
  out.push_back(my - mx.dot(w));
  return out;
}

size_t whitespace_token_count(const std::string& text) { return split_words(text).size(); }

Vector embed_text(const std::string& text, size_t dim) {
  Vector v(dim, 0.0);
  if (dim == 0) return v;
  for (const auto& w : split_words(text)) v[fnv1a_64(w) % dim] += 1.0;
  double norm = 0;
  for (double x : v) norm += x * x;
  if (norm == 0) return v;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<Vector> embed(const std::vector<std::string>& texts, size_t dim) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t, dim));
  return out;
}

double padding_of(const std::vector<size_t>& lengths) {
  if (lengths.empty()) return 0;
  const size_t mx = *std::max_element(lengths.begin(), lengths.end());
  double pad = 0;
  for (size_t l : lengths) pad += static_cast<double>(mx - l);
  return pad;
}

FeatureEncoder::FeatureEncoder(std::vector<std::string> names, std::vector<ColumnType> types, size_t hash_buckets)
    : names_(std::move(names)), types_(std::move(types)), buckets_(hash_buckets) {
  if (names_.size() != types_.size()) fail(ErrorCode::ArityMismatch, "feature names and types differ in length");
  for (auto t : types_) {
    offsets_.push_back(width_);
    width_ += t == ColumnType::Text ? buckets_ : 1;
  }
}

std::vector<size_t> FeatureEncoder::dims_of(const std::vector<std::string>& columns) const {
  std::vector<size_t> dims;
  for (size_t i = 0; i < names_.size(); ++i) {
    if (std::find(columns.begin(), columns.end(), names_[i]) == columns.end()) continue;
    const size_t w = types_[i] == ColumnType::Text ? buckets_ : 1;
    for (size_t k = 0; k < w; ++k) dims.push_back(offsets_[i] + k);
  }
  return dims;
}

void FeatureEncoder::encode(const Row& features, double* out) const {
  if (features.size() != names_.size())
    fail(ErrorCode::ArityMismatch, "expected " + std::to_string(names_.size()) + " features, got " +
                                       std::to_string(features.size()));
  std::fill(out, out + width_, 0.0);
  for (size_t i = 0; i < names_.size(); ++i) {
    const Value& v = features[i];
    if (is_null(v)) continue;
    if (types_[i] == ColumnType::Text) {
      const auto* s = std::get_if<std::string>(&v);
      if (!s) fail(ErrorCode::TypeMismatch, "feature " + names_[i] + " expects text");
      out[offsets_[i] + fnv1a_64(*s) % buckets_] += 1.0;
    } else {
      if (!is_numeric(v)) fail(ErrorCode::TypeMismatch, "feature " + names_[i] + " expects a number");
      out[offsets_[i]] = as_double(v);
    }
  }
}

double RidgeModel::predict(const Row& features) const {
  std::vector<double> x(encoder.width());
  encoder.encode(features, x.data());
  double y = intercept;
  for (size_t d : active_dims) y += weights[d] * x[d];
  return y;
}

RidgeModel RidgeModel::fit(const FeatureEncoder& encoder, const std::vector<Row>& features,
                           const std::vector<double>& target, double lambda) {
  if (features.empty()) fail(ErrorCode::DegenerateInput, "ridge needs at least one row");
  if (features.size() != target.size()) fail(ErrorCode::ArityMismatch, "target length differs from row count");
  if (!(lambda > 0)) fail(ErrorCode::InvalidArgument, "ridge lambda must be positive");
  const size_t w = encoder.width();
  RidgeModel m;
  m.encoder = encoder;
  m.lambda = lambda;
  m.n = features.size();
  DenseMatrix x(m.n, w);
  for (size_t r = 0; r < m.n; ++r) encoder.encode(features[r], &x.data[r * w]);
  m.mean_x.assign(w, 0.0);
  for (size_t r = 0; r < m.n; ++r)
    for (size_t c = 0; c < w; ++c) m.mean_x[c] += x.at(r, c);
  for (double& v : m.mean_x) v /= static_cast<double>(m.n);
  m.mean_y = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(m.n);

  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      x.data.data(), static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(w));
  Eigen::Map<const Eigen::RowVectorXd> mx(m.mean_x.data(), static_cast<Eigen::Index>(w));
  xm.rowwise() -= mx;
  Eigen::VectorXd yc(static_cast<Eigen::Index>(m.n));
  for (size_t r = 0; r < m.n; ++r) yc(static_cast<Eigen::Index>(r)) = target[r] - m.mean_y;
  const Eigen::MatrixXd g = xm.transpose() * xm;
  const Eigen::VectorXd c = xm.transpose() * yc;
  m.gram.resize(w * w);
  for (size_t i = 0; i < w; ++i)
    for (size_t j = 0; j < w; ++j) m.gram[i * w + j] = g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  m.xty.assign(c.data(), c.data() + w);
  return m.restrict_to(encoder.names());
}

RidgeModel RidgeModel::restrict_to(const std::vector<std::string>& columns) const {
  RidgeModel m = *this;
  m.mask.clear();
  for (const auto& name : encoder.names())
    if (std::find(columns.begin(), columns.end(), name) != columns.end()) m.mask.push_back(name);
  if (m.mask.empty()) fail(ErrorCode::EmptyMask, "no permitted feature columns");
  const auto dims = encoder.dims_of(m.mask);
  m.active_dims = dims;
  solve_dims(gram, xty, encoder.width(), dims, lambda, m.weights);
  m.intercept = mean_y;
  for (size_t d : dims) m.intercept -= m.weights[d] * mean_x[d];
  return m;
}

double StagedRidge::key_feature(const Value& key) const {
  if (key_bucket_mean.empty()) return global_mean;
  const size_t b = fnv1a_64(value_to_sql(key)) % key_bucket_mean.size();
  return key_bucket_count[b] ? key_bucket_mean[b] : global_mean;
}

double StagedRidge::predict(const Row& features, const Value& key) const {
  Row ext = features;
  ext.emplace_back(key_feature(key));
  return 0.5 * (base.predict(features) + relation.predict(ext));
}

ModelRuntime::ModelRuntime(Catalog& catalog, CacheManager* cache, ProfileConfig config)
    : catalog_(catalog), cache_(cache), config_(config) {}

StagedRidge ModelRuntime::fit_staged(const FeatureEncoder& encoder, const std::vector<Row>& features,
                                     const std::vector<Value>& keys, const std::vector<double>& target) const {
  StagedRidge s;
  const auto& names = encoder.names();

  // Base-model selection: full mask or a leave-one-out mask, by holdout quality.
  std::vector<std::vector<std::string>> masks{names};
  if (names.size() > 1)
    for (size_t i = 0; i < names.size(); ++i) {
      auto m = names;
      m.erase(m.begin() + static_cast<long>(i));
      masks.push_back(std::move(m));
    }
  const size_t stride = std::max<size_t>(2, config_.holdout_stride);
  std::vector<Row> fit_rows, hold_rows;
  std::vector<double> fit_y, hold_y;
  for (size_t i = 0; i < features.size(); ++i) {
    if (features.size() >= 2 * stride && i % stride == stride - 1) {
      hold_rows.push_back(features[i]);
      hold_y.push_back(target[i]);
    } else {
      fit_rows.push_back(features[i]);
      fit_y.push_back(target[i]);
    }
  }
  if (hold_rows.empty()) {
    hold_rows = fit_rows;
    hold_y = fit_y;
  }
  const RidgeModel probe = RidgeModel::fit(encoder, fit_rows, fit_y, config_.lambda);
  size_t best = 0;
  double best_q = -1;
  for (size_t i = 0; i < masks.size(); ++i) {
    const RidgeModel cand = probe.restrict_to(masks[i]);
    std::vector<double> pred;
    for (const auto& r : hold_rows) pred.push_back(cand.predict(r));
    const double q = rmse_quality(pred, hold_y);
    if (q > best_q) {
      best_q = q;
      best = i;
    }
  }
  const RidgeModel full = RidgeModel::fit(encoder, features, target, config_.lambda);
  s.base = full.restrict_to(masks[best]);

  // Relation modeling: target encoding of the row key, appended to the base features.
  s.global_mean = full.mean_y;
  s.key_bucket_mean.assign(kKeyBuckets, 0.0);
  s.key_bucket_count.assign(kKeyBuckets, 0);
  for (size_t i = 0; i < keys.size(); ++i) {
    const size_t b = fnv1a_64(value_to_sql(keys[i])) % kKeyBuckets;
    s.key_bucket_mean[b] += target[i];
    ++s.key_bucket_count[b];
  }
  for (size_t b = 0; b < kKeyBuckets; ++b)
    if (s.key_bucket_count[b]) s.key_bucket_mean[b] /= s.key_bucket_count[b];

  auto ext_names = names;
  ext_names.push_back(kKeyFeature);
  auto ext_types = encoder.types();
  ext_types.push_back(ColumnType::Float64);
  FeatureEncoder ext(ext_names, ext_types, encoder.hash_buckets());
  std::vector<Row> ext_rows;
  ext_rows.reserve(features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    Row r = features[i];
    r.emplace_back(s.key_feature(keys[i]));
    ext_rows.push_back(std::move(r));
  }
  auto rel_mask = s.base.mask;
  rel_mask.push_back(kKeyFeature);
  s.relation = RidgeModel::fit(ext, ext_rows, target, config_.lambda).restrict_to(rel_mask);
  return s;
}

ModelRecord ModelRuntime::fit_record(const std::string& name, ModelKind kind, const std::vector<TableColumn>& features,
                                     const std::optional<TableColumn>& target, const RowSet& training,
                                     const CostProfile& cost, const std::vector<CostProfile>& staged_cost) const {
  ModelRecord rec;
  rec.name = name;
  rec.kind = kind;
  rec.feature_columns = features;
  rec.target_column = target;
  rec.cost_profile = cost;
  rec.staged_profiles = staged_cost;

  LoadedModel lm;
  lm.kind = kind;
  lm.cost = cost;
  lm.staged_cost = staged_cost;
  lm.embed_dim = config_.embed_dim;
  lm.seed = config_.seed;
  std::vector<ColumnType> types;
  for (size_t i = 0; i < features.size(); ++i) {
    lm.feature_names.push_back(features[i].column);
    types.push_back(i < training.schema.size() ? training.schema[i].type : ColumnType::Float64);
  }
  const auto names = lm.feature_names;

  if (kind == ModelKind::RidgeRegressor) {
    if (features.empty()) fail(ErrorCode::InvalidArgument, "ridge_regressor needs feature columns");
    if (!target) fail(ErrorCode::InvalidArgument, "ridge_regressor needs a target column");
    const size_t d = features.size();
    if (training.schema.size() < d + 1) fail(ErrorCode::SchemaMismatch, "training rows lack the target column");
    std::vector<Row> x;
    std::vector<double> y;
    std::vector<Value> keys;
    for (size_t r = 0; r < training.rows.size(); ++r) {
      const Row& row = training.rows[r];
      if (is_null(row[d])) continue;
      x.emplace_back(row.begin(), row.begin() + static_cast<long>(d));
      y.push_back(as_double(row[d]));
      keys.push_back(row.size() > d + 1 ? row[d + 1] : Value{static_cast<int64_t>(r)});
    }
    FeatureEncoder enc(names, types, config_.hash_buckets);

    // Holdout profiling on every stride-th row, then refit on everything.
    const Holdout h = split_holdout(x, y, keys, config_.holdout_stride);
    {
      LoadedModel probe = lm;
      probe.ridge = RidgeModel::fit(enc, h.fx, h.fy, config_.lambda);
      probe.staged = fit_staged(enc, h.fx, h.fk, h.fy);
      std::vector<InferenceInput> hold;
      for (size_t i = 0; i < h.hx.size(); ++i) hold.push_back({h.hx[i], h.hk[i], d});
      rec.quality_profile[quality_key("direct", names)] = profile(probe, hold, h.hy, PipelineVariant::Direct);
      rec.quality_profile[quality_key("staged", names)] = profile(probe, hold, h.hy, PipelineVariant::Staged);
    }
    lm.ridge = RidgeModel::fit(enc, x, y, config_.lambda);
    lm.staged = fit_staged(enc, x, keys, y);
  } else {
    if (features.size() != 1) fail(ErrorCode::InvalidArgument, std::string(to_string(kind)) + " takes one text column");
    rec.quality_profile[quality_key("direct", names)] = 1.0;
  }
  rec.weights = serialize_model(lm);
  return rec;
}

std::shared_ptr<const LoadedModel> ModelRuntime::train_inline(const std::vector<std::string>& names,
                                                              const std::vector<ColumnType>& types, const RowSet& rows,
                                                              PipelineVariant variant, const CostProfile& cost,
                                                              const std::vector<CostProfile>& staged_cost) const {
  const size_t d = names.size();
  auto lm = std::make_shared<LoadedModel>();
  lm->kind = ModelKind::RidgeRegressor;
  lm->feature_names = names;
  lm->cost = cost;
  lm->staged_cost = staged_cost;
  lm->embed_dim = config_.embed_dim;
  lm->seed = config_.seed;
  std::vector<Row> x;
  std::vector<double> y;
  std::vector<Value> keys;
  // Canonical row order: the fit must not depend on how the input was produced.
  std::vector<const Row*> ordered;
  for (const Row& row : rows.rows) ordered.push_back(&row);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Row* a, const Row* b) {
    for (size_t i = 0; i < std::min(a->size(), b->size()); ++i)
      if (int c = compare_values((*a)[i], (*b)[i]); c != 0) return c < 0;
    return a->size() < b->size();
  });
  for (const Row* rp : ordered) {
    const Row& row = *rp;
    if (row.size() < d + 1) fail(ErrorCode::ArityMismatch, "training row lacks the target column");
    if (is_null(row[d])) continue;
    x.emplace_back(row.begin(), row.begin() + static_cast<long>(d));
    y.push_back(as_double(row[d]));
    keys.push_back(row.size() > d + 1 ? row.back() : Value{});
  }
  if (x.empty()) fail(ErrorCode::DegenerateInput, "no training rows");
  FeatureEncoder enc(names, types, config_.hash_buckets);
  lm->ridge = RidgeModel::fit(enc, x, y, config_.lambda);
  if (variant == PipelineVariant::Staged) lm->staged = fit_staged(enc, x, keys, y);
  return lm;
}

std::shared_ptr<const LoadedModel> ModelRuntime::load(const ModelRecord& record) const {
  const ModelRef ref = record.ref();
  {
    std::lock_guard lock(loaded_mu_);
    if (auto it = loaded_.find(ref); it != loaded_.end()) return it->second;
  }
  auto lm = std::make_shared<LoadedModel>(deserialize_model(record.weights));
  lm->cost = record.cost_profile;
  lm->staged_cost = record.staged_profiles;
  std::lock_guard lock(loaded_mu_);
  return loaded_.emplace(ref, std::move(lm)).first->second;
}

double ModelRuntime::simulated_cost(const LoadedModel& model, PipelineVariant variant, size_t items, double tokens,
                                    double padding) {
  if (variant == PipelineVariant::Direct || model.staged_cost.empty())
    return batch_cost(model.cost, items, tokens, padding);
  double total = 0;
  for (const auto& stage : model.staged_cost) total += batch_cost(stage, items, tokens, padding);
  return total;
}

InferResult ModelRuntime::infer(const LoadedModel& model, const std::vector<InferenceInput>& batch,
                                PipelineVariant variant) const {
  InferResult out;
  out.predictions.reserve(batch.size());
  std::vector<size_t> lengths;
  for (const auto& in : batch) {
    if (in.features.size() != model.feature_names.size())
      fail(ErrorCode::ArityMismatch, "expected " + std::to_string(model.feature_names.size()) + " inputs, got " +
                                         std::to_string(in.features.size()));
    lengths.push_back(in.length);
    switch (model.kind) {
      case ModelKind::RidgeRegressor: {
        if (variant == PipelineVariant::Staged) {
          if (!model.staged) fail(ErrorCode::InvalidArgument, "model has no staged pipeline");
          out.predictions.emplace_back(model.staged->predict(in.features, in.key));
        } else {
          out.predictions.emplace_back(model.ridge->predict(in.features));
        }
        break;
      }
      case ModelKind::HashEmbedder: {
        const auto* s = std::get_if<std::string>(&in.features[0]);
        out.predictions.emplace_back(embed_text(s ? *s : std::string(), model.embed_dim));
        out.tokens += static_cast<double>(in.length);
        break;
      }
      case ModelKind::GenerativeMock: {
        const auto* s = std::get_if<std::string>(&in.features[0]);
        const std::string text = s ? *s : std::string();
        const uint64_t h = mix64(fnv1a_64(text, model.seed ^ 0xcbf29ce484222325ULL));
        const double factor = (0.5 + uniform_from(h)) * config_.generative_expansion;
        const auto n_out = static_cast<size_t>(std::llround(static_cast<double>(in.length) * factor));
        std::string gen;
        for (size_t i = 0; i < n_out; ++i) {
          if (i) gen += ' ';
          gen += "t" + std::to_string(mix64(h + i) % 997);
        }
        out.predictions.emplace_back(std::move(gen));
        out.tokens += static_cast<double>(n_out);
        break;
      }
    }
  }
  out.padding = padding_of(lengths);
  out.cost_ms = simulated_cost(model, variant, batch.size(), out.tokens, out.padding);
  return out;
}

double ModelRuntime::profile(const LoadedModel& model, const std::vector<InferenceInput>& holdout,
                             const std::vector<double>& targets, PipelineVariant variant,
                             const ModelRecord* record) const {
  if (holdout.empty()) fail(ErrorCode::DegenerateInput, "empty holdout");
  if (holdout.size() != targets.size()) fail(ErrorCode::ArityMismatch, "holdout and targets differ in length");
  double q = 1.0;
  if (model.kind == ModelKind::RidgeRegressor) {
    const auto res = infer(model, holdout, variant);
    std::vector<double> pred;
    for (const auto& p : res.predictions) pred.push_back(as_double(p));
    q = rmse_quality(pred, targets);
  }
  if (record) {
    const auto mask = model.ridge ? model.ridge->mask : model.feature_names;
    catalog_.record_quality(record->ref(), quality_key(to_string(variant), mask), q);
  }
  return q;
}

SliceResult ModelRuntime::slice_for_mask(const ModelRecord& record, const std::vector<std::string>& permitted) const {
  std::vector<std::string> mask;
  for (const auto& f : record.feature_names())
    if (std::find(permitted.begin(), permitted.end(), f) != permitted.end()) mask.push_back(f);
  if (mask.empty()) fail(ErrorCode::EmptyMask, "no permitted feature columns for model " + record.name);

  CacheKey key{ArtifactKind::OptimizerState, fnv1a_128("slice:" + record.ref().to_string() + ":" + mask_key(mask)),
               SnapshotVersion{0}, record.ref()};
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      if (const auto* p = std::any_cast<std::shared_ptr<const LoadedModel>>(&hit->payload))
        return {*p, true, 0.0};
    }
  }
  const auto base = load(record);
  auto variant = std::make_shared<LoadedModel>(*base);
  restrict_model(*variant, mask);
  // The closed-form re-solve is charged as one batch over the mask width.
  const double cost = batch_cost(record.cost_profile, mask.size(), 0, 0);
  std::shared_ptr<const LoadedModel> out = variant;
  if (cache_) {
    const double frac = static_cast<double>(mask.size()) / static_cast<double>(record.feature_columns.size());
    PutOptions opts;
    opts.payload = out;
    cache_->put(key, std::max(1e-3, record.cost_profile.weight_size_mb * frac), Tier::T1_host, opts);
  }
  return {out, false, cost};
}

namespace {

using nlohmann::json;

json ridge_to_json(const RidgeModel& m) {
  std::vector<std::string> types;
  for (auto t : m.encoder.types()) types.emplace_back(to_string(t));
  return json{{"names", m.encoder.names()}, {"types", types},    {"buckets", m.encoder.hash_buckets()},
              {"lambda", m.lambda},         {"weights", m.weights}, {"intercept", m.intercept},
              {"n", m.n},                   {"mean_x", m.mean_x}, {"mean_y", m.mean_y},
              {"gram", m.gram},             {"xty", m.xty},       {"mask", m.mask}};
}

RidgeModel ridge_from_json(const json& j) {
  RidgeModel m;
  std::vector<ColumnType> types;
  for (const auto& t : j.at("types")) types.push_back(*parse_column_type(t.get<std::string>()));
  m.encoder = FeatureEncoder(j.at("names").get<std::vector<std::string>>(), types, j.at("buckets").get<size_t>());
  m.lambda = j.at("lambda");
  m.weights = j.at("weights").get<std::vector<double>>();
  m.intercept = j.at("intercept");
  m.n = j.at("n");
  m.mean_x = j.at("mean_x").get<std::vector<double>>();
  m.mean_y = j.at("mean_y");
  m.gram = j.at("gram").get<std::vector<double>>();
  m.xty = j.at("xty").get<std::vector<double>>();
  m.mask = j.at("mask").get<std::vector<std::string>>();
  m.active_dims = m.encoder.dims_of(m.mask);
  return m;
}

}  // namespace

std::string serialize_model(const LoadedModel& model) {
  json j{{"kind", to_string(model.kind)},
         {"features", model.feature_names},
         {"embed_dim", model.embed_dim},
         {"seed", model.seed}};
  if (model.ridge) j["ridge"] = ridge_to_json(*model.ridge);
  if (model.staged) {
    j["staged"] = json{{"base", ridge_to_json(model.staged->base)},
                       {"relation", ridge_to_json(model.staged->relation)},
                       {"bucket_mean", model.staged->key_bucket_mean},
                       {"bucket_count", model.staged->key_bucket_count},
                       {"global_mean", model.staged->global_mean}};
  }
  return j.dump();
}

LoadedModel deserialize_model(const std::string& payload) {
  LoadedModel m;
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad model payload: ") + e.what());
  }
  auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) fail(ErrorCode::InvalidArgument, "unknown model kind in payload");
  m.kind = *kind;
  m.feature_names = j.at("features").get<std::vector<std::string>>();
  m.embed_dim = j.at("embed_dim");
  m.seed = j.at("seed");
  if (j.contains("ridge")) m.ridge = ridge_from_json(j["ridge"]);
  if (j.contains("staged")) {
    const auto& s = j["staged"];
    StagedRidge st;
    st.base = ridge_from_json(s.at("base"));
    st.relation = ridge_from_json(s.at("relation"));
    st.key_bucket_mean = s.at("bucket_mean").get<std::vector<double>>();
    st.key_bucket_count = s.at("bucket_count").get<std::vector<uint32_t>>();
    st.global_mean = s.at("global_mean");
    m.staged = std::move(st);
  }
  return m;
}

double ModelRuntime::profile_mask(const ModelRecord& record, const std::vector<std::string>& mask) const {
  std::vector<std::string> names = record.feature_names();
  std::vector<std::string> ordered;
  for (const auto& f : names)
    if (std::find(mask.begin(), mask.end(), f) != mask.end()) ordered.push_back(f);
  if (ordered.empty()) fail(ErrorCode::EmptyMask, "no permitted feature columns for model " + record.name);
  if (record.kind != ModelKind::RidgeRegressor) {
    catalog_.record_quality(record.ref(), quality_key("direct", ordered), 1.0);
    return 1.0;
  }
  if (!record.target_column) fail(ErrorCode::MissingProfile, "model " + record.name + " has no target to profile on");
  const auto table = catalog_.find_table(record.target_column->table);
  if (!table) fail(ErrorCode::UnknownTable, record.target_column->table);
  std::vector<std::string> cols = names;
  cols.push_back(record.target_column->column);
  const RowSet rows = catalog_.scan(*table, catalog_.current_version(), cols);
  const size_t d = names.size();
  std::vector<Row> x;
  std::vector<double> y;
  std::vector<Value> keys;
  for (size_t r = 0; r < rows.rows.size(); ++r) {
    if (is_null(rows.rows[r][d])) continue;
    x.emplace_back(rows.rows[r].begin(), rows.rows[r].begin() + static_cast<long>(d));
    y.push_back(as_double(rows.rows[r][d]));
    keys.push_back(Value{static_cast<int64_t>(r)});
  }
  if (x.empty()) fail(ErrorCode::DegenerateInput, "no rows to profile model " + record.name + " on");
  std::vector<ColumnType> types;
  for (size_t i = 0; i < d; ++i) types.push_back(rows.schema[i].type);
  FeatureEncoder enc(names, types, config_.hash_buckets);
  const Holdout h = split_holdout(x, y, keys, config_.holdout_stride);
  LoadedModel probe = *load(record);
  probe.ridge = RidgeModel::fit(enc, h.fx, h.fy, config_.lambda);
  probe.staged = fit_staged(enc, h.fx, h.fk, h.fy);
  restrict_model(probe, ordered);
  std::vector<InferenceInput> hold;
  for (size_t i = 0; i < h.hx.size(); ++i) hold.push_back({h.hx[i], h.hk[i], d});
  const double q = profile(probe, hold, h.hy, PipelineVariant::Direct, &record);
  profile(probe, hold, h.hy, PipelineVariant::Staged, &record);
  return q;
}

}  // namespace neurq
