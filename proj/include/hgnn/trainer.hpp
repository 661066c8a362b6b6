#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgnn/dataset.hpp"
#include "hgnn/gnn.hpp"
#include "hgnn/graph_store.hpp"
#include "hgnn/hist_cache.hpp"
#include "hgnn/sampler.hpp"

namespace hgnn {

enum class OptimizerKind { SGD, ADAM };

struct TrainConfig {
  CachePolicy policy;
  SamplePlan plan{{5, 5, 5}, 1000, 0};
  LayerKind kind = LayerKind::GCN;
  std::size_t hidden_dim = 256;
  double eta = 0.1;
  std::size_t epochs = 1;
  OptimizerKind optimizer = OptimizerKind::SGD;
  std::uint64_t seed = 0;
  /// Raw-feature rows kept in the layer-0 region (0 = none).
  std::size_t feature_cache_rows = 0;
  /// Run the estimation-error probe every k iterations (0 = never).
  std::size_t probe_every = 0;
  /// Snapshot full-graph embeddings at `snapshot_level` every k iterations
  /// (0 = never); feeds cosine_similarity_probe.
  std::size_t snapshot_every = 0;
  std::size_t snapshot_level = 1;
  std::size_t queue_capacity = 2;
  /// Stop after this many iterations in total (0 = run all epochs).
  std::size_t max_iterations = 0;
  /// Add wall-clock columns to the metrics stream.
  bool timings = false;

  [[nodiscard]] std::size_t num_layers() const noexcept { return plan.num_layers(); }
  void validate() const;
};

struct IterMetrics {
  std::uint64_t iteration = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  std::uint64_t bytes_features_fetched = 0;
  /// What the same batch would fetch with no cache of any kind.
  std::uint64_t bytes_features_unpruned = 0;
  std::uint64_t bytes_cache_read = 0;
  std::uint64_t nodes_pruned = 0;
  std::uint64_t feature_hits = 0;
  // Embedding-layer cache counters for this iteration (valid_entries is a gauge).
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t admissions = 0;
  std::uint64_t gradient_evictions = 0;
  std::uint64_t staleness_evictions = 0;
  std::uint64_t forced_evictions = 0;
  std::uint64_t valid_entries = 0;
  std::uint64_t staleness_violations = 0;
  std::optional<double> est_error_mean;
  std::uint64_t weight_checksum = 0;
  std::optional<double> time_ms;
};

/// Outcome of cache-aware pruning. Index l runs over levels 0..L.
struct PruneResult {
  /// Nodes of V^(l) whose value this iteration depends on (computed or cached).
  std::vector<std::vector<std::uint8_t>> needed;
  /// active[l] marks dst of block(l) that are computed, l = 1..L (index 0 unused).
  std::vector<std::vector<std::uint8_t>> active;
  /// Rows served from the embedding cache at level l = 1..L-1, keyed by local id.
  std::vector<SrcRows<float>> cached;
  /// Ages of every embedding-cache hit in this iteration.
  std::vector<std::uint64_t> hit_ages;
  std::uint64_t nodes_pruned = 0;
};

/// Looks up V^(l) for l = L-1..1 in the cache, cuts the in-edges of cached
/// or unneeded dst nodes and drops src nodes no surviving edge refers to.
/// Only embedding layers are consulted; the layer-0 region is left to the
/// feature loader.
PruneResult prune_with_cache(LayeredSubgraph& sub, HistCache& cache, std::uint64_t iter);

/// Per-level rows from a full-graph forward (every node, all in-neighbors).
struct EmbeddingLog {
  std::size_t level = 1;
  std::map<std::uint64_t, EmbMatrix> snapshots;  // iteration -> num_nodes x hidden
};

struct CosineHistogram {
  std::vector<double> edges;  // bins + 1 boundaries over [-1, 1]
  std::vector<std::uint64_t> counts;
  std::uint64_t zero_rows = 0;  // excluded: zero vector at either snapshot
  std::uint64_t total = 0;      // nodes compared
  std::vector<double> values;   // per compared node

  /// Fraction of compared nodes with similarity > threshold.
  [[nodiscard]] double mass_above(double threshold) const;
};

/// Cosine similarity of each node's embedding at iteration t against t - s.
CosineHistogram cosine_similarity_probe(const EmbeddingLog& log, std::uint64_t t, std::uint64_t s,
                                        std::size_t bins = 20);

/// Embeddings h^(level) for every node under full neighborhoods.
EmbMatrix full_graph_embeddings(const Network<float>& net, const Csr2Graph& g, const EmbMatrix& features,
                                std::size_t level);

class Trainer {
 public:
  Trainer(const Dataset& ds, TrainConfig cfg);

  /// One pass of the cached training loop over an already-sampled batch.
  IterMetrics train_iteration(LayeredSubgraph sub, std::uint64_t epoch);
  /// Runs one epoch through the background sampler.
  std::vector<IterMetrics> train_epoch(std::uint64_t epoch);
  /// All configured epochs (or until max_iterations).
  std::vector<IterMetrics> train();

  /// Accuracy of sampled inference over `ids` (no cache).
  [[nodiscard]] double evaluate(std::span<const NodeId> ids) const;

  [[nodiscard]] const Network<float>& network() const noexcept { return net_; }
  [[nodiscard]] HistCache& cache() noexcept { return cache_; }
  [[nodiscard]] const HistCache& cache() const noexcept { return cache_; }
  [[nodiscard]] std::uint64_t iteration() const noexcept { return iter_; }
  [[nodiscard]] const EmbeddingLog& embedding_log() const noexcept { return log_; }
  [[nodiscard]] const TrainConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const Csr2Graph& graph() const noexcept { return graph_; }
  [[nodiscard]] bool done() const noexcept { return cfg_.max_iterations != 0 && iter_ >= cfg_.max_iterations; }

 private:
  void step(const Network<float>& grads);

  const Dataset& ds_;
  TrainConfig cfg_;
  Csr2Graph graph_;
  Network<float> net_;
  std::optional<Adam<float>> adam_;
  HistCache cache_;
  EmbeddingLog log_;
  std::uint64_t iter_ = 0;
};

/// Shared setup so the cached trainer and the baseline start identically.
Network<float> initial_network(const TrainConfig& cfg, std::size_t in_dim, std::size_t num_classes);
std::vector<std::vector<NodeId>> epoch_batches(const TrainConfig& cfg, std::span<const NodeId> train_ids,
                                               std::uint64_t epoch);
/// Default per-layer capacity: 2 * expected admissions per iteration * t_stale.
std::size_t default_cache_capacity(const TrainConfig& cfg, const Dataset& ds, const Csr2Graph& g);

/// Plain neighbor-sampling training with no cache and no pruning. Returns
/// the weight checksum after every iteration.
std::vector<std::uint64_t> run_neighbor_sampling_baseline(const Dataset& ds, const TrainConfig& cfg,
                                                          std::size_t iterations);

void write_metrics_csv(std::ostream& out, std::span<const IterMetrics> rows, bool timings);

}  // namespace hgnn
