#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hgnn/matrix.hpp"
#include "hgnn/types.hpp"

namespace hgnn {

inline constexpr std::uint64_t kInfiniteStaleness = std::numeric_limits<std::uint64_t>::max();

struct CachePolicy {
  double p_grad = 0.9;  // fraction of a batch (smallest gradients) kept
  std::uint64_t t_stale = 20;  // max age in iterations; kInfiniteStaleness allowed
  std::size_t capacity = 0;    // rows per embedding layer
  /// Re-stamp admit_iteration of cached nodes that pass the gradient test.
  bool refresh_on_retain = false;
  /// Double a layer's table when forced evictions exceed 1% of admissions
  /// within one ring pass.
  bool auto_grow = true;

  void validate() const;
  [[nodiscard]] bool infinite_staleness() const noexcept { return t_stale == kInfiniteStaleness; }
};

struct CacheCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t admissions = 0;
  std::uint64_t gradient_evictions = 0;
  std::uint64_t staleness_evictions = 0;
  std::uint64_t forced_evictions = 0;
  std::uint64_t valid_entries = 0;  // gauge, not cumulative
  /// Hits served with age > t_stale. Must stay zero.
  std::uint64_t staleness_violations = 0;

  CacheCounters& operator+=(const CacheCounters& o);
};

/// Result of a batched lookup. hit_rows(i) belongs to hit_ids[i];
/// hit_pos / miss_pos are positions in the query array.
struct LookupResult {
  std::vector<NodeId> hit_ids;
  std::vector<std::size_t> hit_pos;
  std::vector<std::uint64_t> hit_ages;
  EmbMatrix hit_rows;
  std::vector<NodeId> miss_ids;
  std::vector<std::size_t> miss_pos;
};

/// Selective historical-embedding cache.
///
/// Layer 0 is a read-only raw-feature region filled once by
/// backfill_features(). Layers 1..num_layers each hold a ring-buffer table
/// of embeddings, a node-id mapping array (node -> row, admit iteration) and
/// a row-owner array. Evictions only invalidate the mapping; rows are
/// recycled when the ring header passes over them.
class HistCache {
 public:
  struct Entry {
    std::uint32_t row;
    std::uint64_t admit_iteration;
  };

  HistCache(std::size_t num_nodes, std::size_t num_layers, std::size_t hidden_dim, CachePolicy policy,
            std::size_t feature_dim = 0, std::size_t feature_rows = 0);

  [[nodiscard]] std::size_t num_nodes() const noexcept { return num_nodes_; }
  /// Number of embedding layers (layer 0 excluded).
  [[nodiscard]] std::size_t num_layers() const noexcept { return layers_.size(); }
  [[nodiscard]] const CachePolicy& policy() const noexcept { return policy_; }

  LookupResult lookup(std::size_t layer, std::span<const NodeId> ids, std::uint64_t current_iter);

  /// Gradient-ranked admission / eviction for one layer after a backward
  /// pass. `batch_nodes` are the nodes of V^(l) that took part in the
  /// iteration (computed or served from cache); `grad_norms` aligns with it.
  /// `normal_nodes` are the freshly computed ones, with their embeddings in
  /// the matching rows of `normal_embeddings`.
  void update_cache(std::size_t layer, std::span<const NodeId> batch_nodes,
                    std::span<const NodeId> normal_nodes, const EmbMatrix& normal_embeddings,
                    std::span<const double> grad_norms, std::uint64_t current_iter);

  /// Moves every ring header back to row 0 once t_stale iterations have
  /// passed since the previous sweep, expiring entries that can no longer
  /// be served.
  void sweep_staleness(std::uint64_t current_iter);

  /// Fills the layer-0 region with raw features of the highest in-degree
  /// nodes; the highest-degree node lands on the last row.
  void backfill_features(const EmbMatrix& features, std::span<const std::size_t> in_degrees);

  // Inspection.
  [[nodiscard]] std::optional<Entry> entry(std::size_t layer, NodeId v) const;
  [[nodiscard]] std::size_t capacity(std::size_t layer) const;
  [[nodiscard]] std::size_t header(std::size_t layer) const;
  [[nodiscard]] NodeId row_owner(std::size_t layer, std::size_t row) const;
  [[nodiscard]] std::span<const float> row_data(std::size_t layer, std::size_t row) const;
  [[nodiscard]] const CacheCounters& counters(std::size_t layer) const;
  [[nodiscard]] CacheCounters total_counters() const;
  /// Full scan of the id map / row owner pairing. Throws std::logic_error
  /// when a valid mapping does not round-trip.
  void audit() const;

  static constexpr std::uint32_t kNoRow = std::numeric_limits<std::uint32_t>::max();
  static constexpr NodeId kFreeRow = kInvalidNode;

 private:
  struct Table {
    EmbMatrix data;
    std::size_t header = 0;
    std::vector<Entry> id_map;
    std::vector<NodeId> row_owner;
    CacheCounters counters;
    std::uint64_t window_admissions = 0;
    std::uint64_t window_forced = 0;
  };

  Table& table(std::size_t layer);
  [[nodiscard]] const Table& table(std::size_t layer) const;
  void invalidate(Table& t, NodeId v);
  void write_row(Table& t, NodeId v, std::span<const float> values, std::uint64_t current_iter);
  void reset_header(Table& t);
  [[nodiscard]] bool servable_later(const Entry& e, std::uint64_t current_iter) const;

  std::size_t num_nodes_;
  std::size_t hidden_dim_;
  CachePolicy policy_;
  std::uint64_t last_sweep_ = 0;
  Table features_;
  std::vector<Table> layers_;
};

}  // namespace hgnn
