#include "hgnn/hist_cache.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hgnn {

void CachePolicy::validate() const {
  if (!(p_grad >= 0.0 && p_grad <= 1.0))
    throw std::invalid_argument("CachePolicy: p_grad must be in [0, 1], got " + std::to_string(p_grad));
}

CacheCounters& CacheCounters::operator+=(const CacheCounters& o) {
  hits += o.hits;
  misses += o.misses;
  admissions += o.admissions;
  gradient_evictions += o.gradient_evictions;
  staleness_evictions += o.staleness_evictions;
  forced_evictions += o.forced_evictions;
  valid_entries += o.valid_entries;
  staleness_violations += o.staleness_violations;
  return *this;
}

HistCache::HistCache(std::size_t num_nodes, std::size_t num_layers, std::size_t hidden_dim,
                     CachePolicy policy, std::size_t feature_dim, std::size_t feature_rows)
    : num_nodes_(num_nodes), hidden_dim_(hidden_dim), policy_(policy) {
  policy_.validate();
  if (policy_.capacity >= kNoRow || feature_rows >= kNoRow)
    throw std::invalid_argument("HistCache: capacity too large");
  features_.data = EmbMatrix(std::min(feature_rows, num_nodes), feature_dim);
  features_.id_map.assign(num_nodes, Entry{kNoRow, 0});
  features_.row_owner.assign(features_.data.rows(), kFreeRow);
  layers_.resize(num_layers);
  for (Table& t : layers_) {
    t.data = EmbMatrix(policy_.capacity, hidden_dim);
    t.id_map.assign(num_nodes, Entry{kNoRow, 0});
    t.row_owner.assign(policy_.capacity, kFreeRow);
  }
}

HistCache::Table& HistCache::table(std::size_t layer) {
  if (layer == 0) return features_;
  if (layer > layers_.size()) throw std::out_of_range("HistCache: layer " + std::to_string(layer) + " out of range");
  return layers_[layer - 1];
}

const HistCache::Table& HistCache::table(std::size_t layer) const {
  return const_cast<HistCache*>(this)->table(layer);
}

bool HistCache::servable_later(const Entry& e, std::uint64_t current_iter) const {
  if (policy_.infinite_staleness()) return true;
  return e.admit_iteration + policy_.t_stale >= current_iter + 1;
}

void HistCache::invalidate(Table& t, NodeId v) {
  t.id_map[v].row = kNoRow;
  --t.counters.valid_entries;
}

LookupResult HistCache::lookup(std::size_t layer, std::span<const NodeId> ids, std::uint64_t current_iter) {
  Table& t = table(layer);
  LookupResult res;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const NodeId v = ids[i];
    if (v >= num_nodes_) throw std::out_of_range("HistCache::lookup: node " + std::to_string(v) + " out of range");
    Entry& e = t.id_map[v];
    bool hit = e.row != kNoRow;
    std::uint64_t age = 0;
    if (hit && layer > 0) {
      age = current_iter >= e.admit_iteration ? current_iter - e.admit_iteration : 0;
      if (!policy_.infinite_staleness() && age > policy_.t_stale) {
        invalidate(t, v);
        ++t.counters.staleness_evictions;
        hit = false;
      }
    }
    if (hit) {
      if (layer > 0 && !policy_.infinite_staleness() && age > policy_.t_stale) ++t.counters.staleness_violations;
      res.hit_ids.push_back(v);
      res.hit_pos.push_back(i);
      res.hit_ages.push_back(age);
    } else {
      res.miss_ids.push_back(v);
      res.miss_pos.push_back(i);
    }
  }
  res.hit_rows = EmbMatrix(res.hit_ids.size(), t.data.cols());
  for (std::size_t h = 0; h < res.hit_ids.size(); ++h) {
    auto src = t.data.row(t.id_map[res.hit_ids[h]].row);
    std::copy(src.begin(), src.end(), res.hit_rows.row(h).begin());
  }
  t.counters.hits += res.hit_ids.size();
  t.counters.misses += res.miss_ids.size();
  return res;
}

void HistCache::reset_header(Table& t) {
  // End of a ring pass: grow when the pass had to overwrite live entries.
  const bool grow = policy_.auto_grow && t.window_forced > 0 &&
                    static_cast<double>(t.window_forced) > 0.01 * static_cast<double>(t.window_admissions);
  t.window_forced = 0;
  t.window_admissions = 0;
  if (grow) {
    const std::size_t old_cap = t.data.rows();
    const std::size_t new_cap = std::min<std::size_t>(std::max<std::size_t>(1, old_cap * 2), kNoRow - 1);
    t.data.resize_rows(new_cap);
    t.row_owner.resize(new_cap, kFreeRow);
    t.header = old_cap % new_cap;
  } else {
    t.header = 0;
  }
}

void HistCache::write_row(Table& t, NodeId v, std::span<const float> values, std::uint64_t current_iter) {
  const std::size_t cap = t.data.rows();
  if (cap == 0) return;
  const std::size_t row = t.header;
  const NodeId prev = t.row_owner[row];
  if (prev != kFreeRow && t.id_map[prev].row == row) {
    if (servable_later(t.id_map[prev], current_iter)) {
      ++t.counters.forced_evictions;
      ++t.window_forced;
    } else {
      ++t.counters.staleness_evictions;
    }
    invalidate(t, prev);
  }
  std::copy(values.begin(), values.end(), t.data.row(row).begin());
  t.row_owner[row] = v;
  t.id_map[v] = Entry{static_cast<std::uint32_t>(row), current_iter};
  ++t.counters.valid_entries;
  ++t.counters.admissions;
  ++t.window_admissions;
  t.header = row + 1;
  if (t.header == cap) reset_header(t);
}

void HistCache::update_cache(std::size_t layer, std::span<const NodeId> batch_nodes,
                             std::span<const NodeId> normal_nodes, const EmbMatrix& normal_embeddings,
                             std::span<const double> grad_norms, std::uint64_t current_iter) {
  if (layer == 0) throw std::invalid_argument("HistCache::update_cache: layer 0 holds raw features only");
  Table& t = table(layer);
  if (grad_norms.size() != batch_nodes.size())
    throw std::invalid_argument("HistCache::update_cache: need one gradient norm per batch node");
  if (normal_embeddings.rows() != normal_nodes.size() || normal_embeddings.cols() != hidden_dim_)
    throw std::invalid_argument("HistCache::update_cache: embedding shape mismatch");

  std::vector<std::size_t> normal_row(batch_nodes.size(), kNoRow);
  {
    std::vector<std::pair<NodeId, std::size_t>> sorted_normals(normal_nodes.size());
    for (std::size_t i = 0; i < normal_nodes.size(); ++i) sorted_normals[i] = {normal_nodes[i], i};
    std::sort(sorted_normals.begin(), sorted_normals.end());
    for (std::size_t b = 0; b < batch_nodes.size(); ++b) {
      auto it = std::lower_bound(sorted_normals.begin(), sorted_normals.end(),
                                 std::pair<NodeId, std::size_t>{batch_nodes[b], 0});
      if (it != sorted_normals.end() && it->first == batch_nodes[b]) normal_row[b] = it->second;
    }
  }

  // Smallest gradient norms first; ties by node id.
  std::vector<std::size_t> order(batch_nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (grad_norms[a] != grad_norms[b]) return grad_norms[a] < grad_norms[b];
    return batch_nodes[a] < batch_nodes[b];
  });
  const auto admit_count = static_cast<std::size_t>(
      std::floor(policy_.p_grad * static_cast<double>(batch_nodes.size()) + 1e-9));
  // With t_stale = 0 nothing written now could ever be served.
  const bool may_write = policy_.t_stale > 0;

  for (std::size_t r = admit_count; r < order.size(); ++r) {
    const NodeId v = batch_nodes[order[r]];
    if (t.id_map[v].row != kNoRow) {
      invalidate(t, v);
      ++t.counters.gradient_evictions;
    }
  }
  for (std::size_t r = 0; r < admit_count && r < order.size(); ++r) {
    const std::size_t b = order[r];
    const NodeId v = batch_nodes[b];
    if (normal_row[b] != kNoRow) {
      if (!may_write) continue;
      if (t.id_map[v].row != kNoRow) invalidate(t, v);
      write_row(t, v, normal_embeddings.row(normal_row[b]), current_iter);
    } else if (t.id_map[v].row != kNoRow && policy_.refresh_on_retain) {
      t.id_map[v].admit_iteration = current_iter;
    }
  }
}

void HistCache::sweep_staleness(std::uint64_t current_iter) {
  if (policy_.infinite_staleness() || policy_.t_stale == 0) return;
  if (current_iter < last_sweep_ + policy_.t_stale) return;
  last_sweep_ = current_iter;
  for (Table& t : layers_) {
    for (std::size_t row = 0; row < t.row_owner.size(); ++row) {
      const NodeId v = t.row_owner[row];
      if (v == kFreeRow || t.id_map[v].row != row) continue;
      // The sweep runs before this iteration's lookups, so age == t_stale still serves.
      if (t.id_map[v].admit_iteration + policy_.t_stale < current_iter) {
        invalidate(t, v);
        ++t.counters.staleness_evictions;
      }
    }
    reset_header(t);
  }
}

void HistCache::backfill_features(const EmbMatrix& features, std::span<const std::size_t> in_degrees) {
  Table& t = features_;
  const std::size_t rows = t.data.rows();
  if (rows == 0) return;
  if (features.rows() != num_nodes_ || in_degrees.size() != num_nodes_)
    throw std::invalid_argument("HistCache::backfill_features: need one feature row and degree per node");
  if (features.cols() != t.data.cols())
    throw std::invalid_argument("HistCache::backfill_features: feature width mismatch");
  std::vector<NodeId> nodes(num_nodes_);
  for (std::size_t i = 0; i < num_nodes_; ++i) nodes[i] = static_cast<NodeId>(i);
  std::partial_sort(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(rows), nodes.end(),
                    [&](NodeId a, NodeId b) {
                      if (in_degrees[a] != in_degrees[b]) return in_degrees[a] > in_degrees[b];
                      return a < b;
                    });
  for (std::size_t i = 0; i < rows; ++i) {
    const NodeId v = nodes[i];
    const std::size_t row = rows - 1 - i;
    auto src = features.row(v);
    std::copy(src.begin(), src.end(), t.data.row(row).begin());
    if (t.row_owner[row] != kFreeRow && t.id_map[t.row_owner[row]].row == row) invalidate(t, t.row_owner[row]);
    if (t.id_map[v].row != kNoRow) invalidate(t, v);
    t.row_owner[row] = v;
    t.id_map[v] = Entry{static_cast<std::uint32_t>(row), 0};
    ++t.counters.valid_entries;
  }
}

std::optional<HistCache::Entry> HistCache::entry(std::size_t layer, NodeId v) const {
  const Table& t = table(layer);
  if (v >= num_nodes_ || t.id_map[v].row == kNoRow) return std::nullopt;
  return t.id_map[v];
}

std::size_t HistCache::capacity(std::size_t layer) const { return table(layer).data.rows(); }
std::size_t HistCache::header(std::size_t layer) const { return table(layer).header; }
NodeId HistCache::row_owner(std::size_t layer, std::size_t row) const { return table(layer).row_owner.at(row); }
std::span<const float> HistCache::row_data(std::size_t layer, std::size_t row) const {
  return table(layer).data.row(row);
}
const CacheCounters& HistCache::counters(std::size_t layer) const { return table(layer).counters; }

CacheCounters HistCache::total_counters() const {
  CacheCounters c = features_.counters;
  for (const Table& t : layers_) c += t.counters;
  return c;
}

void HistCache::audit() const {
  auto check = [&](const Table& t, std::size_t layer) {
    std::uint64_t valid = 0;
    for (std::size_t v = 0; v < t.id_map.size(); ++v) {
      const std::uint32_t row = t.id_map[v].row;
      if (row == kNoRow) continue;
      ++valid;
      if (row >= t.row_owner.size() || t.row_owner[row] != v)
        throw std::logic_error("HistCache audit: layer " + std::to_string(layer) + " node " + std::to_string(v) +
                               " maps to a row it does not own");
    }
    if (valid != t.counters.valid_entries)
      throw std::logic_error("HistCache audit: layer " + std::to_string(layer) + " valid-entry gauge drifted");
    if (t.row_owner.size() > 0 && t.header >= t.row_owner.size())
      throw std::logic_error("HistCache audit: header out of range");
  };
  check(features_, 0);
  for (std::size_t l = 0; l < layers_.size(); ++l) check(layers_[l], l + 1);
}

}  // namespace hgnn
