#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hgnn/dataset.hpp"
#include "hgnn/trainer.hpp"
#include "test_util.hpp"

namespace hgnn {
namespace {

const Dataset& small_sbm() {
  static const Dataset ds = [] {
    SynthParams p;
    p.model = SynthModel::SBM;
    p.num_nodes = 600;
    p.blocks = 4;
    p.p_in = 0.03;
    p.p_out = 0.002;
    p.feature_dim = 8;
    p.noise = 1.5;
    p.seed = 5;
    return synth_graph(p);
  }();
  return ds;
}

TrainConfig small_config(double p_grad, std::uint64_t t_stale) {
  TrainConfig cfg;
  cfg.plan = SamplePlan{{4, 4, 4}, 64, 3};
  cfg.hidden_dim = 16;
  cfg.eta = 0.2;
  cfg.policy.p_grad = p_grad;
  cfg.policy.t_stale = t_stale;
  cfg.seed = 3;
  return cfg;
}

// ---- prune_with_cache -------------------------------------------------------

TEST(Prune, EmptyCacheLeavesSubgraphAlone) {
  Rng rng(1);
  Csr2Graph g = build_csr2(testing::random_undirected(80, 200, rng));
  std::vector<NodeId> seeds{0, 1, 2, 3};
  auto sub = sample_layered(g, seeds, SamplePlan{{3, 3, 3}, 4, 0}, rng);
  auto copy = sub;
  HistCache cache(80, 2, 4, CachePolicy{});
  auto pr = prune_with_cache(sub, cache, 0);
  EXPECT_EQ(pr.nodes_pruned, 0u);
  for (std::size_t l = 1; l <= 3; ++l) {
    EXPECT_TRUE(std::ranges::equal(sub.block(l).adj.end(), copy.block(l).adj.end()));
    EXPECT_TRUE(std::all_of(pr.active[l].begin(), pr.active[l].end(), [](auto a) { return a == 1; }));
    if (l < 3) {
      EXPECT_TRUE(pr.cached[l].local_ids.empty());
    }
  }
}

TEST(Prune, CachedNodeStopsExpanding) {
  // v1 is the seed with in-neighbors v2 and v3; v2 <- {v4, v5}, v3 <- {v6, v7}.
  CooGraph coo;
  coo.num_nodes = 8;
  for (auto [s, d] : {std::pair<NodeId, NodeId>{2, 1}, {3, 1}, {4, 2}, {5, 2}, {6, 3}, {7, 3}}) coo.add_edge(s, d);
  Csr2Graph g = build_csr2(coo);
  Rng rng(1);
  std::vector<NodeId> seeds{1};
  auto sub = sample_layered(g, seeds, SamplePlan{{10, 10}, 1, 0}, rng);
  CachePolicy pol;
  pol.p_grad = 1.0;
  pol.capacity = 8;
  HistCache cache(8, 1, 2, pol);
  std::vector<NodeId> v3{3};
  std::vector<double> gn{0.0};
  cache.update_cache(1, v3, v3, EmbMatrix(1, 2, 0.5f), gn, 0);

  auto pr = prune_with_cache(sub, cache, 1);
  const Block& b1 = sub.block(1);
  std::set<NodeId> loaded;
  for (std::size_t i = 0; i < b1.num_src(); ++i)
    if (pr.needed[0][i]) loaded.insert(b1.src_nodes[i]);
  // v3 still feeds the seed's own layer-1 row, but nothing below it is loaded.
  EXPECT_EQ(loaded, (std::set<NodeId>{1, 2, 3, 4, 5}));
  for (std::size_t i = 0; i < b1.num_dst(); ++i) {
    if (b1.dst_nodes[i] == 3) {
      EXPECT_TRUE(b1.adj.neighbors(static_cast<NodeId>(i)).empty());
      EXPECT_FALSE(pr.active[1][i]);
    }
    if (b1.dst_nodes[i] == 2) {
      EXPECT_EQ(b1.adj.neighbors(static_cast<NodeId>(i)).size(), 2u);
    }
  }
  ASSERT_EQ(pr.cached[1].local_ids.size(), 1u);
  EXPECT_EQ(b1.dst_nodes[pr.cached[1].local_ids[0]], 3u);
}

// Feature-load set by walking the unpruned sample: from every seed, follow
// self and sampled in-edges downward, stopping at cached nodes.
std::set<NodeId> reachability_oracle(const LayeredSubgraph& sub, const std::vector<std::set<NodeId>>& cached) {
  const std::size_t L = sub.num_layers();
  std::set<NodeId> level(sub.seeds.begin(), sub.seeds.end());
  for (std::size_t l = L; l >= 1; --l) {
    const Block& b = sub.block(l);
    std::set<NodeId> below;
    for (std::size_t i = 0; i < b.num_dst(); ++i) {
      const NodeId v = b.dst_nodes[i];
      if (!level.count(v)) continue;
      if (l < L && cached[l].count(v)) continue;
      below.insert(v);
      for (NodeId c : b.adj.neighbors(static_cast<NodeId>(i))) below.insert(b.src_nodes[c]);
    }
    level = std::move(below);
  }
  return level;
}

TEST(Prune, MatchesReachabilityOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(10, 120);
    const std::size_t n = nd(rng);
    Csr2Graph g = build_csr2(testing::random_undirected(n, n * 2, rng));
    const std::size_t L = 2 + trial % 3;
    std::vector<std::size_t> fan(L, 3);
    std::vector<NodeId> seeds;
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (int k = 0; k < 5; ++k) seeds.push_back(pick(rng));
    auto sub = sample_layered(g, seeds, SamplePlan{fan, 5, 0}, rng);
    const auto original = sub;

    CachePolicy pol;
    pol.p_grad = 1.0;
    pol.t_stale = 10;
    pol.capacity = n;
    HistCache cache(n, L - 1, 2, pol);
    std::vector<std::set<NodeId>> cached(L);
    std::bernoulli_distribution coin(0.3);
    for (std::size_t l = 1; l < L; ++l) {
      std::vector<NodeId> ids;
      for (NodeId v = 0; v < n; ++v)
        if (coin(rng)) ids.push_back(v);
      std::vector<double> gn(ids.size(), 0.0);
      cache.update_cache(l, ids, ids, EmbMatrix(ids.size(), 2), gn, 0);
      cached[l].insert(ids.begin(), ids.end());
    }
    auto pr = prune_with_cache(sub, cache, 1);
    std::set<NodeId> got;
    for (std::size_t i = 0; i < sub.block(1).num_src(); ++i)
      if (pr.needed[0][i]) got.insert(sub.block(1).src_nodes[i]);
    ASSERT_EQ(got, reachability_oracle(original, cached)) << "trial " << trial;
    // Surviving edges belong to computed dst only.
    for (std::size_t l = 1; l <= L; ++l)
      for (std::size_t i = 0; i < sub.block(l).num_dst(); ++i)
        if (!pr.active[l][i]) {
          ASSERT_TRUE(sub.block(l).adj.neighbors(static_cast<NodeId>(i)).empty());
        }
  }
}

// ---- Trainer ----------------------------------------------------------------

TEST(Trainer, DegenerateSettingsMatchBaselineBitwise) {
  const Dataset& ds = small_sbm();
  for (std::size_t backfill : {std::size_t{0}, std::size_t{100}}) {
    for (auto [p, t] : {std::pair<double, std::uint64_t>{0.0, 0}, {0.0, 20}, {0.9, 0}}) {
      TrainConfig cfg = small_config(p, t);
      cfg.feature_cache_rows = backfill;
      cfg.epochs = 20;
      cfg.max_iterations = 50;
      Trainer tr(ds, cfg);
      auto metrics = tr.train();
      ASSERT_EQ(metrics.size(), 50u);
      auto base = run_neighbor_sampling_baseline(ds, cfg, 50);
      for (std::size_t i = 0; i < 50; ++i)
        ASSERT_EQ(metrics[i].weight_checksum, base[i]) << "iteration " << i << " p=" << p << " t=" << t;
    }
  }
}

TEST(Trainer, DeterministicMetricsStream) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(0.9, 5);
  cfg.epochs = 2;
  cfg.probe_every = 3;
  std::ostringstream a, b;
  {
    Trainer t(ds, cfg);
    auto m = t.train();
    write_metrics_csv(a, m, false);
  }
  {
    Trainer t(ds, cfg);
    auto m = t.train();
    write_metrics_csv(b, m, false);
  }
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "iteration,epoch,loss,bytes_features_fetched,bytes_features_unpruned,bytes_cache_read,nodes_pruned,"
            "feature_hits,hits,misses,admissions,gradient_evictions,staleness_evictions,forced_evictions,"
            "valid_entries,staleness_violations,est_error_mean,weight_checksum");
}

TEST(Trainer, UnboundedModeKeepsEveryComputedEmbedding) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(1.0, kInfiniteStaleness);
  Trainer tr(ds, cfg);
  EXPECT_EQ(tr.cache().capacity(1), ds.num_nodes());
  std::vector<std::set<NodeId>> computed(3);
  std::uint64_t epoch2_misses = 0, epoch2_first_seen = 0;
  for (std::uint64_t epoch = 0; epoch < 2; ++epoch) {
    auto batches = epoch_batches(cfg, ds.train, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      auto sub = sample_batch(tr.graph(), batches[b], cfg.plan, epoch * batches.size() + b);
      // Which needed level-l nodes have never been computed? Those are the only allowed misses.
      auto probe_sub = sub;
      HistCache& cache = tr.cache();
      std::uint64_t first_seen = 0;
      {
        auto trial = probe_sub;
        HistCache copy = cache;
        auto pr = prune_with_cache(trial, copy, tr.iteration());
        for (std::size_t l = 1; l <= 2; ++l)
          for (std::size_t i = 0; i < trial.block(l).num_dst(); ++i)
            if (pr.needed[l][i] && !computed[l].count(trial.block(l).dst_nodes[i])) ++first_seen;
        for (std::size_t l = 1; l <= 2; ++l)
          for (std::size_t i = 0; i < trial.block(l).num_dst(); ++i)
            if (pr.active[l][i]) computed[l].insert(trial.block(l).dst_nodes[i]);
      }
      auto m = tr.train_iteration(std::move(sub), epoch);
      EXPECT_EQ(m.forced_evictions + m.gradient_evictions + m.staleness_evictions, 0u);
      EXPECT_EQ(m.misses, first_seen);
      if (epoch == 1) {
        epoch2_misses += m.misses;
        epoch2_first_seen += first_seen;
      }
    }
  }
  EXPECT_EQ(epoch2_misses, epoch2_first_seen);
  EXPECT_GT(tr.cache().counters(1).hits, 0u);
}

TEST(Trainer, ByteAccounting) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(0.9, 10);
  cfg.feature_cache_rows = 60;
  cfg.epochs = 2;
  Trainer tr(ds, cfg);
  const std::uint64_t row = ds.features.cols() * sizeof(float);
  for (const auto& m : tr.train()) {
    EXPECT_EQ(m.bytes_features_fetched % row, 0u);
    EXPECT_LE(m.bytes_features_fetched + m.feature_hits * row, m.bytes_features_unpruned);
    EXPECT_GE(m.bytes_cache_read, m.feature_hits * row);
    EXPECT_EQ(m.staleness_violations, 0u);
  }
}

TEST(Trainer, NoCacheFetchesEverything) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(0.0, 0);
  cfg.probe_every = 1;
  Trainer tr(ds, cfg);
  for (const auto& m : tr.train()) {
    EXPECT_EQ(m.bytes_features_fetched, m.bytes_features_unpruned);
    EXPECT_EQ(m.nodes_pruned, 0u);
    ASSERT_TRUE(m.est_error_mean.has_value());
    EXPECT_EQ(*m.est_error_mean, 0.0);
  }
}

TEST(Trainer, InjectedExactEmbeddingsGiveZeroEstimationError) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(1.0, 100);
  Trainer tr(ds, cfg);
  auto batches = epoch_batches(cfg, ds.train, 0);
  auto sub = sample_batch(tr.graph(), batches[0], cfg.plan, 0);
  ForwardInput<float> exact_in;
  exact_in.h0 = gather_rows<float, NodeId>(ds.features, sub.frontier(0));
  auto exact = network_forward(tr.network(), sub, exact_in);
  // Cache the exact level-1 and level-2 embeddings of every other node.
  HistCache& cache = tr.cache();
  for (std::size_t l = 1; l <= 2; ++l) {
    const Block& b = sub.block(l);
    std::vector<NodeId> ids, local;
    for (std::size_t i = 0; i < b.num_dst(); i += 2) {
      ids.push_back(b.dst_nodes[i]);
      local.push_back(static_cast<NodeId>(i));
    }
    std::vector<double> gn(ids.size(), 0.0);
    cache.update_cache(l, ids, ids, gather_rows<float, NodeId>(exact.layers[l].h_in, local), gn, 0);
  }
  auto pruned = sub;
  auto pr = prune_with_cache(pruned, cache, 0);
  EXPECT_GT(pr.nodes_pruned, 0u);
  ForwardInput<float> in;
  in.h0 = exact_in.h0;
  in.level_cached = pr.cached;
  for (std::size_t l = 1; l <= 3; ++l) in.active.push_back(pr.active[l]);
  auto mixed = network_forward(tr.network(), pruned, in);
  EXPECT_LT(max_abs_diff(mixed.logits, exact.logits), 1e-10);
}

TEST(Trainer, DefaultCapacity) {
  const Dataset& ds = small_sbm();
  Csr2Graph g = build_csr2(ds.graph);
  EXPECT_EQ(default_cache_capacity(small_config(0.0, 20), ds, g), 0u);
  EXPECT_EQ(default_cache_capacity(small_config(0.9, 0), ds, g), 0u);
  EXPECT_EQ(default_cache_capacity(small_config(1.0, kInfiniteStaleness), ds, g), ds.num_nodes());
  const auto c = default_cache_capacity(small_config(0.5, 2), ds, g);
  EXPECT_GT(c, 0u);
  EXPECT_LE(c, ds.num_nodes());
}

TEST(Trainer, ConfigValidation) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(0.9, 20);
  cfg.plan.fanouts = {3, 0};
  EXPECT_THROW(Trainer(ds, cfg), std::invalid_argument);
  cfg = small_config(1.2, 20);
  EXPECT_THROW(Trainer(ds, cfg), std::invalid_argument);
  cfg = small_config(0.5, 20);
  cfg.eta = -1;
  EXPECT_THROW(Trainer(ds, cfg), std::invalid_argument);
}

// ---- Cosine probe -------------------------------------------------------------

TEST(CosineProbe, IdenticalAndOrthogonalSnapshots) {
  EmbeddingLog log;
  log.snapshots[0] = EmbMatrix(3, 2, std::vector<float>{1, 0, 0, 2, 0, 0});
  log.snapshots[5] = EmbMatrix(3, 2, std::vector<float>{1, 0, 0, 2, 0, 0});
  log.snapshots[9] = EmbMatrix(3, 2, std::vector<float>{0, 3, -1, 0, 1, 1});
  auto same = cosine_similarity_probe(log, 5, 5);
  EXPECT_EQ(same.total, 2u);
  EXPECT_EQ(same.zero_rows, 1u);
  EXPECT_EQ(same.counts.back(), 2u);
  EXPECT_DOUBLE_EQ(same.mass_above(0.95), 1.0);
  auto orth = cosine_similarity_probe(log, 9, 9);
  ASSERT_EQ(orth.values.size(), 2u);
  EXPECT_NEAR(orth.values[0], 0.0, 1e-12);
  EXPECT_NEAR(orth.values[1], 0.0, 1e-12);
  EXPECT_THROW(cosine_similarity_probe(log, 3, 5), std::invalid_argument);
  EXPECT_THROW(cosine_similarity_probe(log, 7, 1), std::out_of_range);
}

TEST(CosineProbe, EmbeddingsSettleAfterWarmup) {
  const Dataset& ds = small_sbm();
  TrainConfig cfg = small_config(0.9, 20);
  cfg.epochs = 8;
  cfg.snapshot_every = 1;
  Trainer tr(ds, cfg);
  auto m = tr.train();
  const std::uint64_t s = 5;
  const std::uint64_t last = m.back().iteration;
  auto early = cosine_similarity_probe(tr.embedding_log(), s, s);
  auto late = cosine_similarity_probe(tr.embedding_log(), last, s);
  auto drift = [](const CosineHistogram& h) {
    double d = 0.0;
    for (double c : h.values) d += 1.0 - c;
    return d / static_cast<double>(h.values.size());
  };
  ASSERT_FALSE(early.values.empty());
  EXPECT_LT(drift(late), drift(early));
  EXPECT_GE(late.mass_above(0.95), 0.9);
}

TEST(FullGraphEmbeddings, LevelZeroIsFeatures) {
  const Dataset& ds = small_sbm();
  Trainer tr(ds, small_config(0.5, 5));
  EXPECT_EQ(full_graph_embeddings(tr.network(), tr.graph(), ds.features, 0), ds.features);
  EXPECT_THROW(full_graph_embeddings(tr.network(), tr.graph(), ds.features, 4), std::out_of_range);
}

}  // namespace
}  // namespace hgnn
