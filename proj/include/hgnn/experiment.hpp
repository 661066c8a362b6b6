#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hgnn/dataset.hpp"
#include "hgnn/trainer.hpp"

namespace hgnn {

/// "inf", "infinity" or "∞" map to kInfiniteStaleness.
std::uint64_t parse_t_stale(const std::string& text);
std::string format_t_stale(std::uint64_t t_stale);

/// Either a dataset directory or a synth spec.
Dataset load_dataset(const std::optional<std::string>& dir, const std::optional<std::string>& synth_spec);

/// Per-epoch I/O saving in percent: 1 - fetched / bytes with no cache at all.
std::vector<double> epoch_io_saving(const std::vector<IterMetrics>& metrics);
/// Per-epoch mean of the probed estimation error (NaN for epochs without probes).
std::vector<double> epoch_est_error(const std::vector<IterMetrics>& metrics);
double mean_of(const std::vector<double>& xs);

struct TrainSummary {
  std::vector<IterMetrics> metrics;
  std::vector<double> io_saving_pct;  // per epoch
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  CacheCounters cache_totals;
};

TrainSummary run_training(const Dataset& ds, const TrainConfig& cfg);

struct SweepCell {
  double p_grad = 0.0;
  std::uint64_t t_stale = 0;
  double io_saving_pct = 0.0;  // epoch-mean, averaged over seeds
  double test_accuracy = 0.0;  // averaged over seeds
  double feature_hit_pct = 0.0;
  std::uint64_t forced_evictions = 0;
};

/// Runs every (p_grad, t_stale) cell for each seed; cells are independent.
std::vector<SweepCell> sweep(const Dataset& ds, const TrainConfig& base, const std::vector<double>& p_grads,
                             const std::vector<std::uint64_t>& t_stales, const std::vector<std::uint64_t>& seeds);

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);
void write_accuracy_json(std::ostream& out, const TrainSummary& summary, const TrainConfig& cfg);

}  // namespace hgnn
