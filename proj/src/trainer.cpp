#include "hgnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace hgnn {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kBytesPerScalar = sizeof(float);

std::vector<std::int32_t> labels_of(const Dataset& ds, std::span<const NodeId> ids) {
  std::vector<std::int32_t> y(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) y[i] = ds.labels[ids[i]];
  return y;
}

CacheCounters embedding_counters(const HistCache& cache) {
  CacheCounters c;
  for (std::size_t l = 1; l <= cache.num_layers(); ++l) c += cache.counters(l);
  return c;
}

ForwardInput<float> exact_input(const LayeredSubgraph& sub, const EmbMatrix& features) {
  ForwardInput<float> in;
  in.h0 = gather_rows<float, NodeId>(features, sub.frontier(0));
  return in;
}

void step_network(Network<float>& net, std::optional<Adam<float>>& adam, const Network<float>& grads, double eta) {
  if (adam) {
    adam->step(net, grads);
  } else {
    sgd_step(net, grads, eta);
  }
}

std::optional<Adam<float>> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::ADAM) return Adam<float>(cfg.eta);
  return std::nullopt;
}

}  // namespace

void TrainConfig::validate() const {
  policy.validate();
  plan.validate();
  if (hidden_dim == 0) throw std::invalid_argument("TrainConfig: hidden_dim must be >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("TrainConfig: eta must be positive");
  if (queue_capacity == 0) throw std::invalid_argument("TrainConfig: queue_capacity must be >= 1");
  if (snapshot_every != 0 && (snapshot_level == 0 || snapshot_level > num_layers()))
    throw std::invalid_argument("TrainConfig: snapshot_level must be in [1, layers]");
}

PruneResult prune_with_cache(LayeredSubgraph& sub, HistCache& cache, std::uint64_t iter) {
  const std::size_t L = sub.num_layers();
  if (L == 0) throw std::invalid_argument("prune_with_cache: empty subgraph");
  PruneResult res;
  res.needed.resize(L + 1);
  res.active.resize(L + 1);
  res.cached.resize(L);
  res.needed[L].assign(sub.block(L).num_dst(), 1);

  std::vector<NodeId> query;
  std::vector<NodeId> query_local;
  for (std::size_t l = L; l >= 1; --l) {
    Block& blk = sub.block(l);
    const auto& need = res.needed[l];
    std::vector<std::uint8_t> cached(blk.num_dst(), 0);
    // Levels 1..L-1 may be served from history; level L (the seeds) never.
    if (l < L && l <= cache.num_layers()) {
      query.clear();
      query_local.clear();
      for (std::size_t i = 0; i < blk.num_dst(); ++i) {
        if (!need[i]) continue;
        query.push_back(blk.dst_nodes[i]);
        query_local.push_back(static_cast<NodeId>(i));
      }
      LookupResult hit = cache.lookup(l, query, iter);
      SrcRows<float>& rows = res.cached[l];
      rows.local_ids.reserve(hit.hit_pos.size());
      for (std::size_t h = 0; h < hit.hit_pos.size(); ++h) {
        const NodeId local = query_local[hit.hit_pos[h]];
        cached[local] = 1;
        rows.local_ids.push_back(local);
      }
      rows.rows = std::move(hit.hit_rows);
      res.hit_ages.insert(res.hit_ages.end(), hit.hit_ages.begin(), hit.hit_ages.end());
    }

    auto& active = res.active[l];
    active.assign(blk.num_dst(), 0);
    auto& below = res.needed[l - 1];
    below.assign(blk.num_src(), 0);
    for (std::size_t i = 0; i < blk.num_dst(); ++i) {
      const auto v = static_cast<NodeId>(i);
      if (need[i] && !cached[i]) {
        active[i] = 1;
        below[i] = 1;  // self term
        for (NodeId u : blk.adj.neighbors(v)) below[u] = 1;
      } else if (!blk.adj.is_pruned(v) && blk.adj.in_degree(v) > 0) {
        blk.adj.prune_in_neighbors(v);
      }
    }
  }
  for (std::size_t l = 0; l < L; ++l)
    res.nodes_pruned += static_cast<std::uint64_t>(std::count(res.needed[l].begin(), res.needed[l].end(), 0));
  return res;
}

double CosineHistogram::mass_above(double threshold) const {
  if (values.empty()) return 0.0;
  const auto n = std::count_if(values.begin(), values.end(), [&](double c) { return c > threshold; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

CosineHistogram cosine_similarity_probe(const EmbeddingLog& log, std::uint64_t t, std::uint64_t s, std::size_t bins) {
  if (t < s) throw std::invalid_argument("cosine_similarity_probe: t - s is negative");
  if (bins == 0) throw std::invalid_argument("cosine_similarity_probe: need at least one bin");
  auto now = log.snapshots.find(t);
  auto then = log.snapshots.find(t - s);
  if (now == log.snapshots.end() || then == log.snapshots.end())
    throw std::out_of_range("cosine_similarity_probe: no snapshot at iteration " +
                            std::to_string(now == log.snapshots.end() ? t : t - s));
  const EmbMatrix& a = now->second;
  const EmbMatrix& b = then->second;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("cosine_similarity_probe: snapshot shapes differ");

  CosineHistogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
  for (std::size_t v = 0; v < a.rows(); ++v) {
    auto x = a.row(v);
    auto y = b.row(v);
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      dot += double(x[k]) * y[k];
      nx += double(x[k]) * x[k];
      ny += double(y[k]) * y[k];
    }
    if (nx == 0.0 || ny == 0.0) {
      ++h.zero_rows;
      continue;
    }
    const double c = std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
    const auto bin = std::min(bins - 1, static_cast<std::size_t>((c + 1.0) / 2.0 * static_cast<double>(bins)));
    ++h.counts[bin];
    h.values.push_back(c);
    ++h.total;
  }
  return h;
}

EmbMatrix full_graph_embeddings(const Network<float>& net, const Csr2Graph& g, const EmbMatrix& features,
                                std::size_t level) {
  if (level > net.num_layers()) throw std::out_of_range("full_graph_embeddings: level beyond network depth");
  Block blk;
  const std::size_t n = g.num_nodes();
  blk.dst_nodes.resize(n);
  for (std::size_t v = 0; v < n; ++v) blk.dst_nodes[v] = static_cast<NodeId>(v);
  blk.src_nodes = blk.dst_nodes;
  blk.adj = g;
  blk.sampled_degree.resize(n);
  for (std::size_t v = 0; v < n; ++v) blk.sampled_degree[v] = static_cast<std::uint32_t>(g.in_degree(static_cast<NodeId>(v)));
  blk.src_full_degree = blk.sampled_degree;
  EmbMatrix h = features;
  for (std::size_t l = 0; l < level; ++l) h = layer_forward(net.layers[l], blk, h);
  return h;
}

Network<float> initial_network(const TrainConfig& cfg, std::size_t in_dim, std::size_t num_classes) {
  std::vector<std::size_t> dims{in_dim};
  for (std::size_t l = 1; l < cfg.num_layers(); ++l) dims.push_back(cfg.hidden_dim);
  dims.push_back(num_classes);
  Rng rng(derive_seed(cfg.seed, kInitStream));
  return init_network<float>(cfg.kind, dims, rng);
}

std::vector<std::vector<NodeId>> epoch_batches(const TrainConfig& cfg, std::span<const NodeId> train_ids,
                                               std::uint64_t epoch) {
  Rng rng(derive_seed(cfg.seed, epoch));
  return split_batches(train_ids, cfg.plan.batch_size, rng);
}

std::size_t default_cache_capacity(const TrainConfig& cfg, const Dataset& ds, const Csr2Graph& g) {
  const CachePolicy& p = cfg.policy;
  if (cfg.num_layers() < 2 || p.p_grad == 0.0 || p.t_stale == 0) return 0;
  if (p.infinite_staleness()) return ds.num_nodes();
  // Size from the first batch of epoch 0; auto-grow covers misestimates.
  auto batches = epoch_batches(cfg, ds.train, 0);
  LayeredSubgraph sub = sample_batch(g, batches.front(), cfg.plan, 0);
  std::size_t widest = 0;
  for (std::size_t l = 1; l < cfg.num_layers(); ++l) widest = std::max(widest, sub.block(l).num_dst());
  const auto per_iter = static_cast<std::size_t>(std::ceil(p.p_grad * static_cast<double>(widest)));
  const double want = 2.0 * static_cast<double>(per_iter) * static_cast<double>(p.t_stale);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::min(want, static_cast<double>(ds.num_nodes()))));
}

Trainer::Trainer(const Dataset& ds, TrainConfig cfg)
    : ds_(ds),
      cfg_(std::move(cfg)),
      graph_(build_csr2(ds.graph)),
      net_((cfg_.validate(), ds.validate(), initial_network(cfg_, ds.features.cols(), ds.num_classes()))),
      adam_(make_optimizer(cfg_)),
      cache_(ds.num_nodes(), cfg_.num_layers() - 1, cfg_.hidden_dim,
             [&] {
               CachePolicy p = cfg_.policy;
               if (p.capacity == 0) p.capacity = default_cache_capacity(cfg_, ds, graph_);
               return p;
             }(),
             ds.features.cols(), cfg_.feature_cache_rows) {
  cfg_.policy = cache_.policy();
  log_.level = cfg_.snapshot_level;
  if (cfg_.feature_cache_rows > 0) {
    std::vector<std::size_t> deg(ds.num_nodes());
    for (std::size_t v = 0; v < deg.size(); ++v) deg[v] = graph_.in_degree(static_cast<NodeId>(v));
    cache_.backfill_features(ds.features, deg);
  }
}

void Trainer::step(const Network<float>& grads) { step_network(net_, adam_, grads, cfg_.eta); }

IterMetrics Trainer::train_iteration(LayeredSubgraph sub, std::uint64_t epoch) {
  const auto t_begin = std::chrono::steady_clock::now();
  const std::uint64_t iter = iter_;
  const std::size_t L = sub.num_layers();
  if (L != cfg_.num_layers()) throw std::invalid_argument("Trainer: subgraph depth does not match the network");
  const std::size_t d = ds_.features.cols();

  IterMetrics m;
  m.iteration = iter;
  m.epoch = epoch;

  cache_.sweep_staleness(iter);
  const CacheCounters before = embedding_counters(cache_);
  const bool probe = cfg_.probe_every != 0 && iter % cfg_.probe_every == 0;
  std::optional<LayeredSubgraph> unpruned;
  if (probe) unpruned = sub;

  PruneResult pr = prune_with_cache(sub, cache_, iter);
  m.nodes_pruned = pr.nodes_pruned;

  // Feature loading: needed level-0 rows come from the raw-feature region
  // when resident, otherwise from host memory.
  auto v0 = sub.frontier(0);
  std::vector<NodeId> load_ids, load_local;
  for (std::size_t i = 0; i < v0.size(); ++i) {
    if (!pr.needed[0][i]) continue;
    load_ids.push_back(v0[i]);
    load_local.push_back(static_cast<NodeId>(i));
  }
  LookupResult fr = cache_.lookup(0, load_ids, iter);
  ForwardInput<float> in;
  in.h0 = EmbMatrix(v0.size(), d);
  for (std::size_t h = 0; h < fr.hit_pos.size(); ++h) {
    auto src = fr.hit_rows.row(h);
    std::copy(src.begin(), src.end(), in.h0.row(load_local[fr.hit_pos[h]]).begin());
  }
  for (std::size_t k = 0; k < fr.miss_pos.size(); ++k) {
    auto src = ds_.features.row(fr.miss_ids[k]);
    std::copy(src.begin(), src.end(), in.h0.row(load_local[fr.miss_pos[k]]).begin());
  }
  m.feature_hits = fr.hit_ids.size();
  m.bytes_features_fetched = fr.miss_ids.size() * d * kBytesPerScalar;
  m.bytes_features_unpruned = v0.size() * d * kBytesPerScalar;
  m.bytes_cache_read = fr.hit_ids.size() * d * kBytesPerScalar;
  for (std::size_t l = 1; l < L; ++l) m.bytes_cache_read += pr.cached[l].local_ids.size() * cfg_.hidden_dim * kBytesPerScalar;

  in.level_cached = pr.cached;
  in.active.resize(L);
  for (std::size_t l = 1; l <= L; ++l) in.active[l - 1] = pr.active[l];

  ForwardTape<float> tape = network_forward(net_, sub, in);
  const auto& seeds = sub.block(L).dst_nodes;
  const auto labels = labels_of(ds_, seeds);
  LossResult<float> loss = cross_entropy(tape.logits, labels);
  m.loss = loss.loss;
  BackwardResult<float> back = network_backward(net_, sub, tape, loss.d_logits);

  if (probe) {
    ForwardTape<float> exact = network_forward(net_, *unpruned, exact_input(*unpruned, ds_.features));
    double total = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto a = tape.logits.row(i);
      auto b = exact.logits.row(i);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
      total += std::sqrt(s);
    }
    m.est_error_mean = seeds.empty() ? 0.0 : total / static_cast<double>(seeds.size());
  }

  step(back.weight_grads);

  // Rank every node of V^(l) that fed this iteration; fresh rows are the
  // computed outputs of block(l) as assembled into block(l+1)'s input.
  for (std::size_t l = 1; l < L && l <= cache_.num_layers(); ++l) {
    const Block& blk = sub.block(l);
    const EmbMatrix& h = tape.layers[l].h_in;
    const auto norms = node_grad_norms(back.node_grads[l]);
    std::vector<NodeId> batch_nodes, normal_nodes, normal_local;
    std::vector<double> batch_norms;
    for (std::size_t i = 0; i < blk.num_dst(); ++i) {
      if (!pr.needed[l][i]) continue;
      batch_nodes.push_back(blk.dst_nodes[i]);
      batch_norms.push_back(norms[i]);
      if (pr.active[l][i]) {
        normal_nodes.push_back(blk.dst_nodes[i]);
        normal_local.push_back(static_cast<NodeId>(i));
      }
    }
    cache_.update_cache(l, batch_nodes, normal_nodes, gather_rows<float, NodeId>(h, normal_local), batch_norms, iter);
  }

  const CacheCounters after = embedding_counters(cache_);
  m.hits = after.hits - before.hits;
  m.misses = after.misses - before.misses;
  m.admissions = after.admissions - before.admissions;
  m.gradient_evictions = after.gradient_evictions - before.gradient_evictions;
  m.staleness_evictions = after.staleness_evictions - before.staleness_evictions;
  m.forced_evictions = after.forced_evictions - before.forced_evictions;
  m.valid_entries = after.valid_entries;
  m.staleness_violations = after.staleness_violations - before.staleness_violations;
  if (!cfg_.policy.infinite_staleness()) {
    // Independent of the cache's own bookkeeping: re-check every served age.
    for (std::uint64_t age : pr.hit_ages)
      if (age > cfg_.policy.t_stale) ++m.staleness_violations;
  }
  m.weight_checksum = net_.checksum();

  if (cfg_.snapshot_every != 0 && iter % cfg_.snapshot_every == 0)
    log_.snapshots[iter] = full_graph_embeddings(net_, graph_, ds_.features, cfg_.snapshot_level);

  ++iter_;
  if (cfg_.timings)
    m.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_begin).count();
  return m;
}

std::vector<IterMetrics> Trainer::train_epoch(std::uint64_t epoch) {
  auto batches = epoch_batches(cfg_, ds_.train, epoch);
  const std::uint64_t first = epoch * batches.size();
  if (cfg_.max_iterations != 0) {
    const std::size_t left = done() ? 0 : cfg_.max_iterations - iter_;
    if (batches.size() > left) batches.resize(left);
  }
  std::vector<IterMetrics> out;
  if (batches.empty()) return out;
  out.reserve(batches.size());
  SubgraphProducer producer(graph_, std::move(batches), cfg_.plan, cfg_.queue_capacity, first);
  while (auto sub = producer.next()) out.push_back(train_iteration(std::move(*sub), epoch));
  return out;
}

std::vector<IterMetrics> Trainer::train() {
  std::vector<IterMetrics> all;
  for (std::uint64_t e = 0; e < cfg_.epochs && !done(); ++e) {
    auto rows = train_epoch(e);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

double Trainer::evaluate(std::span<const NodeId> ids) const {
  if (ids.empty()) return 0.0;
  SamplePlan plan = cfg_.plan;
  plan.rng_seed = derive_seed(cfg_.seed, kEvalStream);
  std::size_t correct = 0, total = 0;
  for (std::size_t b = 0; b * plan.batch_size < ids.size(); ++b) {
    const std::size_t lo = b * plan.batch_size;
    const std::size_t hi = std::min(ids.size(), lo + plan.batch_size);
    LayeredSubgraph sub = sample_batch(graph_, ids.subspan(lo, hi - lo), plan, b);
    ForwardTape<float> tape = network_forward(net_, sub, exact_input(sub, ds_.features));
    const auto& seeds = sub.block(sub.num_layers()).dst_nodes;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto row = tape.logits.row(i);
      const auto pred = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += pred == ds_.labels[seeds[i]];
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<std::uint64_t> run_neighbor_sampling_baseline(const Dataset& ds, const TrainConfig& cfg,
                                                          std::size_t iterations) {
  cfg.validate();
  ds.validate();
  const Csr2Graph g = build_csr2(ds.graph);
  Network<float> net = initial_network(cfg, ds.features.cols(), ds.num_classes());
  auto adam = make_optimizer(cfg);
  std::vector<std::uint64_t> trace;
  for (std::uint64_t epoch = 0; trace.size() < iterations; ++epoch) {
    auto batches = epoch_batches(cfg, ds.train, epoch);
    const std::uint64_t first = epoch * batches.size();
    for (std::size_t b = 0; b < batches.size() && trace.size() < iterations; ++b) {
      LayeredSubgraph sub = sample_batch(g, batches[b], cfg.plan, first + b);
      ForwardTape<float> tape = network_forward(net, sub, exact_input(sub, ds.features));
      const auto labels = labels_of(ds, sub.block(sub.num_layers()).dst_nodes);
      LossResult<float> loss = cross_entropy(tape.logits, labels);
      BackwardResult<float> back = network_backward(net, sub, tape, loss.d_logits);
      step_network(net, adam, back.weight_grads, cfg.eta);
      trace.push_back(net.checksum());
    }
  }
  return trace;
}

void write_metrics_csv(std::ostream& out, std::span<const IterMetrics> rows, bool timings) {
  out << "iteration,epoch,loss,bytes_features_fetched,bytes_features_unpruned,bytes_cache_read,nodes_pruned,"
         "feature_hits,hits,misses,admissions,gradient_evictions,staleness_evictions,forced_evictions,"
         "valid_entries,staleness_violations,est_error_mean,weight_checksum";
  if (timings) out << ",time_ms";
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const IterMetrics& m : rows) {
    out << m.iteration << ',' << m.epoch << ',' << num(m.loss) << ',' << m.bytes_features_fetched << ','
        << m.bytes_features_unpruned << ',' << m.bytes_cache_read << ',' << m.nodes_pruned << ',' << m.feature_hits
        << ',' << m.hits << ',' << m.misses << ',' << m.admissions << ',' << m.gradient_evictions << ','
        << m.staleness_evictions << ',' << m.forced_evictions << ',' << m.valid_entries << ','
        << m.staleness_violations << ',' << (m.est_error_mean ? num(*m.est_error_mean) : std::string()) << ','
        << m.weight_checksum;
    if (timings) out << ',' << (m.time_ms ? num(*m.time_ms) : std::string());
    out << '\n';
  }
}

}  // namespace hgnn
