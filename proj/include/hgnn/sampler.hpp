#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "hgnn/graph_store.hpp"
#include "hgnn/types.hpp"

namespace hgnn {

/// One message-passing block: dst frontier V^(l) aggregating from the src
/// frontier V^(l-1). Local dst id i and local src id i refer to the same
/// node for i < dst_nodes.size() (dst nodes are a prefix of src nodes).
struct Block {
  std::vector<NodeId> dst_nodes;
  std::vector<NodeId> src_nodes;  // local -> global id map
  Csr2Graph adj;                  // rows: local dst, columns: local src
  std::vector<std::uint32_t> sampled_degree;  // per dst, fixed at sampling time
  std::vector<std::uint32_t> src_full_degree;  // per src, in-degree in the full graph

  [[nodiscard]] std::size_t num_dst() const noexcept { return dst_nodes.size(); }
  [[nodiscard]] std::size_t num_src() const noexcept { return src_nodes.size(); }
};

/// Per-layer frontiers and blocks for one mini-batch. block(l) maps
/// V^(l-1) -> V^(l), l = 1..L; block(L).dst_nodes are the seeds.
struct LayeredSubgraph {
  std::vector<Block> blocks;  // blocks[l-1] is block(l)
  std::vector<NodeId> seeds;
  std::uint64_t batch_index = 0;

  [[nodiscard]] std::size_t num_layers() const noexcept { return blocks.size(); }
  Block& block(std::size_t l) { return blocks.at(l - 1); }
  [[nodiscard]] const Block& block(std::size_t l) const { return blocks.at(l - 1); }
  /// V^(l) as global ids, l = 0..L.
  [[nodiscard]] std::span<const NodeId> frontier(std::size_t l) const {
    return l == 0 ? std::span<const NodeId>(blocks.front().src_nodes)
                  : std::span<const NodeId>(block(l).dst_nodes);
  }
};

struct SamplePlan {
  std::vector<std::size_t> fanouts;  // outermost (seed hop) first
  std::size_t batch_size = 1000;
  std::uint64_t rng_seed = 0;

  [[nodiscard]] std::size_t num_layers() const noexcept { return fanouts.size(); }
  /// Fan-out cap for block(l).
  [[nodiscard]] std::size_t fanout_for_layer(std::size_t l) const { return fanouts.at(fanouts.size() - l); }
  void validate() const;
};

/// Shuffles train_ids and cuts them into batch_size chunks (last may be short).
std::vector<std::vector<NodeId>> split_batches(std::span<const NodeId> train_ids, std::size_t batch_size,
                                               Rng& rng);

/// Uniform without-replacement fan-out sampling, one block per layer.
LayeredSubgraph sample_layered(const Csr2Graph& g, std::span<const NodeId> seeds, const SamplePlan& plan,
                               Rng& rng);

/// sample_layered with the rng stream derived from (plan.rng_seed, batch_index).
LayeredSubgraph sample_batch(const Csr2Graph& g, std::span<const NodeId> seeds, const SamplePlan& plan,
                             std::uint64_t batch_index);

/// Background sampler feeding a bounded FIFO. One producer thread, one
/// consumer. The producer never sees the historical cache.
class SubgraphProducer {
 public:
  /// Called on the producer thread right before batch `i` is sampled.
  using Observer = std::function<void(std::size_t)>;

  SubgraphProducer(const Csr2Graph& g, std::vector<std::vector<NodeId>> batches, SamplePlan plan,
                   std::size_t queue_capacity, std::uint64_t first_batch_index = 0,
                   Observer on_sample_begin = {});
  ~SubgraphProducer();
  SubgraphProducer(const SubgraphProducer&) = delete;
  SubgraphProducer& operator=(const SubgraphProducer&) = delete;

  /// Blocks until the next subgraph is ready; nullopt after the last batch
  /// or after close().
  std::optional<LayeredSubgraph> next();
  /// Stops the producer; buffered subgraphs are dropped.
  void close();

 private:
  void run();

  const Csr2Graph& graph_;
  std::vector<std::vector<NodeId>> batches_;
  SamplePlan plan_;
  std::size_t capacity_;
  std::uint64_t first_batch_index_;
  Observer on_sample_begin_;

  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<LayeredSubgraph> queue_;
  bool closed_ = false;
  bool done_ = false;
  std::thread worker_;
};

}  // namespace hgnn
