#include "neurq/executor/batching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "neurq/common/error.hpp"

namespace neurq {

BatchPolicy BatchPolicy::fixed(size_t b, double w) {
  BatchPolicy p;
  p.kind = Kind::Fixed;
  p.max_items = b;
  p.window_ms = w;
  p.boundaries.clear();
  return p;
}

BatchPolicy BatchPolicy::bucket(std::vector<size_t> boundaries, size_t b, double w, double merge_period) {
  BatchPolicy p;
  p.kind = Kind::Bucket;
  p.boundaries = std::move(boundaries);
  p.max_items = b;
  p.window_ms = w;
  p.merge_period_ms = merge_period;
  return p;
}

void BatchPolicy::validate() const {
  if (max_items < 1) fail(ErrorCode::InvalidConfig, "batch max_items must be >= 1");
  if (!(window_ms > 0)) fail(ErrorCode::InvalidConfig, "batch window must be > 0");
  if (kind == Kind::Bucket) {
    for (size_t i = 1; i < boundaries.size(); ++i)
      if (boundaries[i] <= boundaries[i - 1]) fail(ErrorCode::InvalidConfig, "bucket boundaries must ascend strictly");
    if (!(merge_period_ms > 0)) fail(ErrorCode::InvalidConfig, "merge period must be > 0");
    if (target_buckets < 1) fail(ErrorCode::InvalidConfig, "target_buckets must be >= 1");
  }
}

size_t MicroBatch::tokens() const {
  size_t t = 0;
  for (const auto& i : items) t += i.length;
  return t;
}

size_t padding_waste(const std::vector<PendingItem>& batch) {
  size_t mx = 0, sum = 0;
  for (const auto& i : batch) {
    mx = std::max(mx, i.length);
    sum += i.length;
  }
  return mx * batch.size() - sum;
}

size_t MicroBatch::padding() const { return padding_waste(items); }

Batcher::Batcher(BatchPolicy policy) : policy_(std::move(policy)) {
  policy_.validate();
  if (policy_.kind == BatchPolicy::Kind::Fixed) policy_.boundaries.clear();
  buckets_.resize(policy_.boundaries.size() + 1);
}

size_t Batcher::bucket_of(size_t length) const {
  return static_cast<size_t>(std::upper_bound(policy_.boundaries.begin(), policy_.boundaries.end(), length) -
                             policy_.boundaries.begin());
}

void Batcher::add(PendingItem item) {
  if (policy_.kind == BatchPolicy::Kind::Bucket) {
    observed_.push_back(item.length);
    if (observed_.size() > 4096) observed_.erase(observed_.begin(), observed_.begin() + 1024);
  }
  buckets_[bucket_of(item.length)].push_back(std::move(item));
}

size_t Batcher::pending() const {
  size_t n = 0;
  for (const auto& b : buckets_) n += b.size();
  return n;
}

std::optional<double> Batcher::next_deadline() const {
  std::optional<double> d;
  for (const auto& b : buckets_)
    if (!b.empty()) {
      const double t = b.front().enqueued_ms + policy_.window_ms;
      if (!d || t < *d) d = t;
    }
  return d;
}

void Batcher::rebucket(double now) {
  last_merge_ = now;
  if (observed_.size() < policy_.target_buckets * 2) return;
  std::vector<size_t> sorted = observed_;
  std::sort(sorted.begin(), sorted.end());
  std::vector<size_t> bounds;
  const size_t k = policy_.target_buckets;
  for (size_t i = 1; i < k; ++i) {
    // Boundary sits just above the i-th quantile so equal lengths stay together.
    const size_t q = sorted[i * sorted.size() / k];
    if (bounds.empty() || q > bounds.back()) bounds.push_back(q);
  }
  if (bounds == policy_.boundaries) return;
  std::vector<PendingItem> all;
  for (auto& b : buckets_)
    for (auto& it : b) all.push_back(std::move(it));
  std::sort(all.begin(), all.end(), [](const PendingItem& a, const PendingItem& b) { return a.seq < b.seq; });
  policy_.boundaries = std::move(bounds);
  buckets_.assign(policy_.boundaries.size() + 1, {});
  for (auto& it : all) buckets_[bucket_of(it.length)].push_back(std::move(it));
}

std::vector<PendingItem> Batcher::pull(size_t bucket, size_t max_tokens) {
  std::vector<PendingItem> out;
  size_t tokens = 0;
  auto& q = buckets_[bucket];
  while (!q.empty() && out.size() < policy_.max_items) {
    if (!out.empty() && tokens + q.front().length > max_tokens) break;
    tokens += q.front().length;
    out.push_back(std::move(q.front()));
    q.pop_front();
  }
  if (out.size() >= policy_.max_items || policy_.kind == BatchPolicy::Kind::Fixed) return out;
  if (!out.empty() && tokens >= max_tokens) return out;

  // Cross-bucket filling: nearest buckets first, lower before upper.
  for (size_t dist = 1; dist < buckets_.size() && out.size() < policy_.max_items; ++dist) {
    for (int side : {-1, 1}) {
      const long other = static_cast<long>(bucket) + side * static_cast<long>(dist);
      if (other < 0 || other >= static_cast<long>(buckets_.size())) continue;
      auto& oq = buckets_[static_cast<size_t>(other)];
      while (!oq.empty() && out.size() < policy_.max_items) {
        if (!out.empty() && tokens + oq.front().length > max_tokens) break;
        tokens += oq.front().length;
        out.push_back(std::move(oq.front()));
        oq.pop_front();
      }
    }
  }
  return out;
}

std::vector<std::vector<PendingItem>> Batcher::take(double now, bool drain, size_t max_tokens) {
  std::vector<std::vector<PendingItem>> out;
  if (policy_.kind == BatchPolicy::Kind::Bucket && now - last_merge_ >= policy_.merge_period_ms) rebucket(now);

  // Full batches first.
  for (size_t b = 0; b < buckets_.size(); ++b) {
    while (true) {
      auto& q = buckets_[b];
      if (q.size() < policy_.max_items) {
        size_t tok = 0;
        for (const auto& it : q) tok += it.length;
        if (q.empty() || tok < max_tokens) break;
      }
      std::vector<PendingItem> batch;
      size_t tokens = 0;
      while (!q.empty() && batch.size() < policy_.max_items) {
        if (!batch.empty() && tokens + q.front().length > max_tokens) break;
        tokens += q.front().length;
        batch.push_back(std::move(q.front()));
        q.pop_front();
      }
      out.push_back(std::move(batch));
    }
  }
  // Expired or drained partial batches.
  for (size_t b = 0; b < buckets_.size(); ++b) {
    while (!buckets_[b].empty() && (drain || now - buckets_[b].front().enqueued_ms >= policy_.window_ms))
      out.push_back(pull(b, max_tokens));
  }
  return out;
}

std::vector<std::vector<PendingItem>> form_batches(const std::vector<PendingItem>& queue, const BatchPolicy& policy,
                                                   double now, bool drain) {
  Batcher b(policy);
  for (const auto& it : queue) b.add(it);
  return b.take(now, drain);
}

}  // namespace neurq
