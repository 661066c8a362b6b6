#include "hgnn/sampler.hpp"

#include <algorithm>
#include <iterator>
#include <stdexcept>
#include <string>

namespace hgnn {

void SamplePlan::validate() const {
  if (fanouts.empty()) throw std::invalid_argument("SamplePlan: no layers");
  for (std::size_t f : fanouts)
    if (f == 0) throw std::invalid_argument("SamplePlan: fan-outs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("SamplePlan: batch_size must be >= 1");
}

std::vector<std::vector<NodeId>> split_batches(std::span<const NodeId> train_ids, std::size_t batch_size,
                                               Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("split_batches: batch_size must be >= 1");
  if (train_ids.empty()) throw std::invalid_argument("split_batches: no training ids");
  std::vector<NodeId> order(train_ids.begin(), train_ids.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<NodeId>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

LayeredSubgraph sample_layered(const Csr2Graph& g, std::span<const NodeId> seeds, const SamplePlan& plan,
                               Rng& rng) {
  plan.validate();
  const std::size_t num_layers = plan.num_layers();
  LayeredSubgraph sub;
  sub.seeds.assign(seeds.begin(), seeds.end());
  sub.blocks.resize(num_layers);

  // Global -> local slot for the frontier under construction; reset per layer.
  std::vector<NodeId> local(g.num_nodes(), kInvalidNode);
  std::vector<NodeId> frontier;
  frontier.reserve(seeds.size());
  for (NodeId s : seeds) {
    if (s >= g.num_nodes()) throw std::out_of_range("sample_layered: seed " + std::to_string(s) + " out of range");
    if (local[s] == kInvalidNode) {
      local[s] = static_cast<NodeId>(frontier.size());
      frontier.push_back(s);
    }
  }
  for (NodeId s : frontier) local[s] = kInvalidNode;

  std::vector<NodeId> picked;
  for (std::size_t l = num_layers; l >= 1; --l) {
    Block& blk = sub.block(l);
    const std::size_t fanout = plan.fanout_for_layer(l);
    blk.dst_nodes = frontier;
    blk.src_nodes = frontier;
    for (std::size_t i = 0; i < frontier.size(); ++i) local[frontier[i]] = static_cast<NodeId>(i);

    std::vector<EdgeIdx> start(frontier.size()), end(frontier.size());
    std::vector<NodeId> cols;
    blk.sampled_degree.resize(frontier.size());
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      auto nb = g.neighbors(frontier[i]);
      picked.clear();
      if (nb.size() <= fanout) {
        picked.assign(nb.begin(), nb.end());
      } else {
        std::sample(nb.begin(), nb.end(), std::back_inserter(picked), fanout, rng);
      }
      start[i] = cols.size();
      for (NodeId u : picked) {
        if (local[u] == kInvalidNode) {
          local[u] = static_cast<NodeId>(blk.src_nodes.size());
          blk.src_nodes.push_back(u);
        }
        cols.push_back(local[u]);
      }
      end[i] = cols.size();
      blk.sampled_degree[i] = static_cast<std::uint32_t>(picked.size());
    }
    blk.adj = Csr2Graph(std::move(start), std::move(end), std::move(cols), blk.src_nodes.size());
    blk.src_full_degree.resize(blk.src_nodes.size());
    for (std::size_t j = 0; j < blk.src_nodes.size(); ++j) {
      blk.src_full_degree[j] = static_cast<std::uint32_t>(g.in_degree(blk.src_nodes[j]));
    }
    for (NodeId u : blk.src_nodes) local[u] = kInvalidNode;
    frontier = blk.src_nodes;
  }
  return sub;
}

LayeredSubgraph sample_batch(const Csr2Graph& g, std::span<const NodeId> seeds, const SamplePlan& plan,
                             std::uint64_t batch_index) {
  Rng rng(derive_seed(plan.rng_seed, batch_index));
  LayeredSubgraph sub = sample_layered(g, seeds, plan, rng);
  sub.batch_index = batch_index;
  return sub;
}

SubgraphProducer::SubgraphProducer(const Csr2Graph& g, std::vector<std::vector<NodeId>> batches,
                                   SamplePlan plan, std::size_t queue_capacity,
                                   std::uint64_t first_batch_index, Observer on_sample_begin)
    : graph_(g), batches_(std::move(batches)), plan_(std::move(plan)), capacity_(queue_capacity),
      first_batch_index_(first_batch_index), on_sample_begin_(std::move(on_sample_begin)) {
  if (capacity_ == 0) throw std::invalid_argument("SubgraphProducer: queue capacity must be >= 1");
  plan_.validate();
  worker_ = std::thread([this] { run(); });
}

SubgraphProducer::~SubgraphProducer() {
  close();
  if (worker_.joinable()) worker_.join();
}

void SubgraphProducer::run() {
  for (std::size_t b = 0; b < batches_.size(); ++b) {
    {
      // Wait for a free slot before sampling so that at most capacity_
      // subgraphs exist ahead of the consumer.
      std::unique_lock lock(mu_);
      not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
      if (closed_) break;
    }
    if (on_sample_begin_) on_sample_begin_(b);
    LayeredSubgraph sub = sample_batch(graph_, batches_[b], plan_, first_batch_index_ + b);
    std::unique_lock lock(mu_);
    if (closed_) break;
    queue_.push_back(std::move(sub));
    not_empty_.notify_one();
  }
  std::lock_guard lock(mu_);
  done_ = true;
  not_empty_.notify_all();
}

std::optional<LayeredSubgraph> SubgraphProducer::next() {
  std::unique_lock lock(mu_);
  not_empty_.wait(lock, [&] { return closed_ || done_ || !queue_.empty(); });
  if (closed_ || queue_.empty()) return std::nullopt;
  LayeredSubgraph sub = std::move(queue_.front());
  queue_.pop_front();
  not_full_.notify_one();
  return sub;
}

void SubgraphProducer::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  queue_.clear();
  not_full_.notify_all();
  not_empty_.notify_all();
}

}  // namespace hgnn
