// Command-line front end: train, sweep, sgc, comms, synth.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgnn/comms.hpp"
#include "hgnn/dataset.hpp"
#include "hgnn/experiment.hpp"
#include "hgnn/sgc.hpp"
#include "hgnn/trainer.hpp"

namespace {

using namespace hgnn;

struct TrainArgs {
  std::string dataset, synth;
  std::size_t layers = 3;
  std::size_t hidden = 256;
  std::vector<std::size_t> fanouts;
  std::size_t batch_size = 1000;
  std::size_t epochs = 5;
  double eta = 0.1;
  double p_grad = 0.9;
  std::string t_stale = "20";
  std::size_t cache_capacity = 0;
  std::size_t feature_cache_rows = 0;
  std::uint64_t seed = 0;
  std::size_t probe_every = 0;
  std::size_t max_iterations = 0;
  std::string kind = "gcn";
  std::string optimizer = "sgd";
  bool refresh_on_retain = false;
  bool timings = false;
  std::string metrics_out;
  std::string accuracy_out;
};

void add_train_options(CLI::App* app, TrainArgs& a) {
  app->add_option("--dataset", a.dataset, "Dataset directory (edges.txt, features.bin, labels.txt, splits)");
  app->add_option("--synth", a.synth, "Synthetic graph, e.g. sbm:n=2000,blocks=4,p_in=0.01,p_out=0.001,dim=16");
  app->add_option("--layers", a.layers, "GNN layers")->check(CLI::PositiveNumber);
  app->add_option("--hidden", a.hidden, "Hidden width")->check(CLI::PositiveNumber);
  app->add_option("--fanouts", a.fanouts, "Per-layer fan-outs, outermost first (a,b,c)")->delimiter(',');
  app->add_option("--batch-size", a.batch_size, "Seeds per mini-batch")->check(CLI::PositiveNumber);
  app->add_option("--epochs", a.epochs, "Training epochs");
  app->add_option("--eta", a.eta, "Learning rate");
  app->add_option("--p-grad", a.p_grad, "Fraction of smallest-gradient nodes admitted")->check(CLI::Range(0.0, 1.0));
  app->add_option("--t-stale", a.t_stale, "Maximum embedding age in iterations, or inf");
  app->add_option("--cache-capacity", a.cache_capacity, "Rows per embedding-cache layer (0 = automatic)");
  app->add_option("--feature-cache-rows", a.feature_cache_rows, "Raw-feature rows kept for high-degree nodes");
  app->add_option("--seed", a.seed, "Random seed");
  app->add_option("--probe-every", a.probe_every, "Estimation-error probe period in iterations (0 = off)");
  app->add_option("--max-iterations", a.max_iterations, "Stop after this many iterations (0 = all epochs)");
  app->add_option("--kind", a.kind, "Layer type")->check(CLI::IsMember({"gcn", "sage"}));
  app->add_option("--optimizer", a.optimizer, "Optimizer")->check(CLI::IsMember({"sgd", "adam"}));
  app->add_flag("--refresh-on-retain", a.refresh_on_retain, "Re-stamp cached nodes that pass the gradient test");
  app->add_flag("--timings", a.timings, "Add a wall-clock column to the metrics CSV");
  app->add_option("--metrics-out", a.metrics_out, "Per-iteration metrics CSV");
  app->add_option("--accuracy-out", a.accuracy_out, "Final accuracy JSON");
}

TrainConfig to_config(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.plan.fanouts = a.fanouts.empty() ? std::vector<std::size_t>(a.layers, 5) : a.fanouts;
  if (cfg.plan.fanouts.size() != a.layers)
    throw std::invalid_argument("--fanouts lists " + std::to_string(cfg.plan.fanouts.size()) + " values for " +
                                std::to_string(a.layers) + " layers");
  cfg.plan.batch_size = a.batch_size;
  cfg.plan.rng_seed = a.seed;
  cfg.seed = a.seed;
  cfg.hidden_dim = a.hidden;
  cfg.epochs = a.epochs;
  cfg.eta = a.eta;
  cfg.policy.p_grad = a.p_grad;
  cfg.policy.t_stale = parse_t_stale(a.t_stale);
  cfg.policy.capacity = a.cache_capacity;
  cfg.policy.refresh_on_retain = a.refresh_on_retain;
  cfg.feature_cache_rows = a.feature_cache_rows;
  cfg.probe_every = a.probe_every;
  cfg.max_iterations = a.max_iterations;
  cfg.kind = a.kind == "sage" ? LayerKind::SAGE_MEAN : LayerKind::GCN;
  cfg.optimizer = a.optimizer == "adam" ? OptimizerKind::ADAM : OptimizerKind::SGD;
  cfg.timings = a.timings;
  cfg.validate();
  return cfg;
}

std::optional<std::string> opt(const std::string& s) { return s.empty() ? std::nullopt : std::optional(s); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = to_config(a);
  const Dataset ds = load_dataset(opt(a.dataset), opt(a.synth));
  TrainSummary s = run_training(ds, cfg);
  if (!a.metrics_out.empty()) {
    auto out = open_out(a.metrics_out);
    write_metrics_csv(out, s.metrics, cfg.timings);
  }
  if (!a.accuracy_out.empty()) {
    auto out = open_out(a.accuracy_out);
    write_accuracy_json(out, s, cfg);
  }
  std::printf("iterations %zu  io_saving %.2f%%  val_acc %.4f  test_acc %.4f\n", s.metrics.size(),
              mean_of(s.io_saving_pct), s.val_accuracy, s.test_accuracy);
  return 0;
}

int cmd_sweep(const TrainArgs& a, const std::vector<double>& p_grads, const std::vector<std::string>& t_stales,
              const std::vector<std::uint64_t>& seeds, const std::string& out_path) {
  const TrainConfig cfg = to_config(a);
  const Dataset ds = load_dataset(opt(a.dataset), opt(a.synth));
  std::vector<std::uint64_t> ts;
  for (const auto& t : t_stales) ts.push_back(parse_t_stale(t));
  const auto cells = sweep(ds, cfg, p_grads, ts, seeds.empty() ? std::vector<std::uint64_t>{a.seed} : seeds);
  if (out_path.empty()) {
    write_sweep_csv(std::cout, cells);
  } else {
    auto out = open_out(out_path);
    write_sweep_csv(out, cells);
  }
  return 0;
}

struct SgcArgs {
  std::size_t n = 100, d = 16, c = 4, k = 2, s = 5, T = 2000, degree = 4;
  double p0 = 0.5, eta = 0.0;
  std::uint64_t seed = 0;
  std::string loss = "ls";
  std::string trace_out;
};

int cmd_sgc(const SgcArgs& a) {
  SgcProblemParams pp;
  pp.n = a.n;
  pp.d = a.d;
  pp.c = a.c;
  pp.k = a.k;
  pp.avg_degree = a.degree;
  pp.seed = a.seed;
  const SgcProblem prob = make_sgc_problem(pp);
  const SgcLoss loss = a.loss == "ce" ? SgcLoss::SOFTMAX_CE : SgcLoss::LEAST_SQUARES;
  Matrix<double> y = prob.y;
  if (loss == SgcLoss::SOFTMAX_CE) {
    // One-hot of the argmax of the realizable targets.
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      const auto best = std::max_element(r.begin(), r.end()) - r.begin();
      std::fill(r.begin(), r.end(), 0.0);
      r[static_cast<std::size_t>(best)] = 1.0;
    }
  }
  Rng rng(derive_seed(a.seed, 1));
  SgcState st = init_sgc_state(prob.hat_x, a.c, a.k, a.s, a.p0, a.eta, loss, rng);
  const double L = estimate_lipschitz(prob.hat_x, loss);
  const double l0 = loss_value(loss, matmul(st.hat_x, st.w), y);
  ConvergenceTrace trace = run_convergence(st, y, a.T, rng);
  if (!a.trace_out.empty()) {
    auto out = open_out(a.trace_out);
    write_trace_csv(out, trace);
  }
  std::printf("L_est %.6g  eta %.6g  loss0 %.6g  final_loss %.6g  min_grad_norm %.6g  identity_violation_max %.3g\n",
              L, st.eta, l0, trace.rows.back().loss, trace.min_grad_norm(), trace.max_identity_violation());
  if (loss == SgcLoss::LEAST_SQUARES && st.eta * L < 2.0)
    std::printf("bound_rhs (l* = 0) %.6g\n", convergence_bound(l0, 0.0, a.T, st.eta, a.p0, L));
  return 0;
}

int cmd_comms(const std::string& topology, std::uint64_t payload, std::uint64_t ids) {
  const DeviceTopology topo = topology.empty() ? two_switch_topology() : read_topology_file(topology);
  const auto reqs = all_to_all_requests(topo.num_devices, payload, ids);
  const RoundSchedule sched = plan_rounds(topo, reqs);
  if (auto err = validate_schedule(topo, reqs, sched)) throw std::runtime_error("invalid schedule: " + *err);
  std::printf("devices %zu  rounds %zu  lower_bound %zu\n", topo.num_devices, sched.num_rounds(),
              round_lower_bound(topo, reqs));
  for (std::size_t r = 0; r < sched.rounds.size(); ++r) {
    std::printf("round %zu:", r + 1);
    for (const Transfer& t : sched.rounds[r]) std::printf(" %zu->%zu", t.src, t.dst);
    std::printf("\n");
  }
  for (auto mode : {TransferMode::ONE_SIDED, TransferMode::TWO_SIDED}) {
    const TrafficStats st = simulate_fetch(reqs, mode, topo);
    std::printf("%s: payload %llu  index %llu  total %llu  sync %llu  completion %.6g  max_link %llu\n",
                mode == TransferMode::ONE_SIDED ? "one-sided" : "two-sided",
                static_cast<unsigned long long>(st.payload_bytes), static_cast<unsigned long long>(st.index_bytes),
                static_cast<unsigned long long>(st.total_bytes()), static_cast<unsigned long long>(st.sync_events),
                st.completion_proxy, static_cast<unsigned long long>(st.max_link_load));
  }
  const TrafficStats naive = simulate_single_shot(reqs, TransferMode::ONE_SIDED, topo);
  std::printf("single-shot: max_link %llu\n", static_cast<unsigned long long>(naive.max_link_load));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mini-batch GNN training with a selective historical-embedding cache"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train with the historical cache and emit metrics");
  add_train_options(train, train_args);

  TrainArgs sweep_args;
  std::vector<double> p_grads{0.0, 0.5, 0.9, 1.0};
  std::vector<std::string> t_stales{"0", "10", "50", "inf"};
  std::vector<std::uint64_t> seeds;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over p_grad x t_stale; one CSV row per cell");
  add_train_options(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--p-grads", p_grads, "p_grad grid")->delimiter(',');
  sweep_cmd->add_option("--t-stales", t_stales, "t_stale grid (integers or inf)")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Seeds averaged per cell")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Output CSV (default stdout)");

  SgcArgs sgc_args;
  auto* sgc = app.add_subcommand("sgc", "Single-layer SGC with random staleness (convergence harness)");
  sgc->add_option("--n", sgc_args.n, "Nodes");
  sgc->add_option("--d", sgc_args.d, "Feature width");
  sgc->add_option("--c", sgc_args.c, "Output width");
  sgc->add_option("--k", sgc_args.k, "Propagation depth");
  sgc->add_option("--s", sgc_args.s, "Maximum staleness");
  sgc->add_option("--p0", sgc_args.p0, "Probability of a fresh row")->check(CLI::Range(0.0, 1.0));
  sgc->add_option("--T", sgc_args.T, "Iterations");
  sgc->add_option("--eta", sgc_args.eta, "Step size (default 1/L)");
  sgc->add_option("--degree", sgc_args.degree, "Mean degree of the random graph");
  sgc->add_option("--loss", sgc_args.loss, "ls or ce")->check(CLI::IsMember({"ls", "ce"}));
  sgc->add_option("--seed", sgc_args.seed, "Random seed");
  sgc->add_option("--trace-out", sgc_args.trace_out, "Gradient-norm trace CSV");

  std::string topology;
  std::uint64_t payload = 1 << 20, ids = 1024;
  auto* comms = app.add_subcommand("comms", "Plan an all-to-all feature exchange and account its traffic");
  comms->add_option("--topology", topology, "Topology file (default: 4 devices, 2 switches, host bridge)");
  comms->add_option("--payload", payload, "Bytes per ordered device pair");
  comms->add_option("--ids", ids, "Rows requested per ordered device pair");

  std::string synth_spec, synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset directory");
  synth->add_option("--synth", synth_spec, "Generator spec")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_args);
    if (*sweep_cmd) return cmd_sweep(sweep_args, p_grads, t_stales, seeds, sweep_out);
    if (*sgc) return cmd_sgc(sgc_args);
    if (*comms) return cmd_comms(topology, payload, ids);
    if (*synth) {
      write_dataset(synth_graph(parse_synth_spec(synth_spec)), synth_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
