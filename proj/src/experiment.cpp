#include "hgnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace hgnn {

std::uint64_t parse_t_stale(const std::string& text) {
  if (text == "inf" || text == "infinity" || text == "∞") return kInfiniteStaleness;
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("t_stale must be a non-negative integer or inf, got \"" + text + "\"");
  }
  if (used != text.size()) throw std::invalid_argument("t_stale must be a non-negative integer or inf, got \"" + text + "\"");
  return v;
}

std::string format_t_stale(std::uint64_t t_stale) {
  return t_stale == kInfiniteStaleness ? "inf" : std::to_string(t_stale);
}

Dataset load_dataset(const std::optional<std::string>& dir, const std::optional<std::string>& synth_spec) {
  if (dir && synth_spec) throw std::invalid_argument("give either a dataset directory or a synth spec, not both");
  if (dir) return ingest(*dir);
  if (synth_spec) return synth_graph(parse_synth_spec(*synth_spec));
  throw std::invalid_argument("no dataset: pass --dataset DIR or --synth MODEL:PARAMS");
}

std::vector<double> epoch_io_saving(const std::vector<IterMetrics>& metrics) {
  std::map<std::uint64_t, std::pair<double, double>> acc;  // epoch -> (fetched, unpruned)
  for (const auto& m : metrics) {
    auto& a = acc[m.epoch];
    a.first += static_cast<double>(m.bytes_features_fetched);
    a.second += static_cast<double>(m.bytes_features_unpruned);
  }
  std::vector<double> out;
  for (const auto& [e, a] : acc) out.push_back(a.second > 0 ? 100.0 * (1.0 - a.first / a.second) : 0.0);
  return out;
}

std::vector<double> epoch_est_error(const std::vector<IterMetrics>& metrics) {
  std::map<std::uint64_t, std::pair<double, std::size_t>> acc;
  for (const auto& m : metrics) {
    auto& a = acc[m.epoch];
    if (m.est_error_mean) {
      a.first += *m.est_error_mean;
      ++a.second;
    }
  }
  std::vector<double> out;
  for (const auto& [e, a] : acc)
    out.push_back(a.second ? a.first / static_cast<double>(a.second) : std::numeric_limits<double>::quiet_NaN());
  return out;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

TrainSummary run_training(const Dataset& ds, const TrainConfig& cfg) {
  Trainer trainer(ds, cfg);
  TrainSummary s;
  s.metrics = trainer.train();
  s.io_saving_pct = epoch_io_saving(s.metrics);
  s.val_accuracy = trainer.evaluate(ds.val);
  s.test_accuracy = trainer.evaluate(ds.test);
  s.cache_totals = trainer.cache().total_counters();
  return s;
}

std::vector<SweepCell> sweep(const Dataset& ds, const TrainConfig& base, const std::vector<double>& p_grads,
                             const std::vector<std::uint64_t>& t_stales, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("sweep: need at least one seed");
  std::vector<SweepCell> cells;
  for (double p : p_grads) {
    for (std::uint64_t ts : t_stales) {
      SweepCell cell;
      cell.p_grad = p;
      cell.t_stale = ts;
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.policy.p_grad = p;
        cfg.policy.t_stale = ts;
        cfg.seed = seed;
        cfg.plan.rng_seed = seed;
        TrainSummary s = run_training(ds, cfg);
        cell.io_saving_pct += mean_of(s.io_saving_pct);
        cell.test_accuracy += s.test_accuracy;
        std::uint64_t fh = 0, f_unpruned = 0;
        for (const auto& m : s.metrics) {
          fh += m.feature_hits;
          f_unpruned += m.bytes_features_unpruned / (sizeof(float) * std::max<std::size_t>(1, ds.features.cols()));
          cell.forced_evictions += m.forced_evictions;
        }
        cell.feature_hit_pct += f_unpruned ? 100.0 * static_cast<double>(fh) / static_cast<double>(f_unpruned) : 0.0;
      }
      const auto k = static_cast<double>(seeds.size());
      cell.io_saving_pct /= k;
      cell.test_accuracy /= k;
      cell.feature_hit_pct /= k;
      cells.push_back(cell);
    }
  }
  return cells;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "p_grad,t_stale,io_saving_pct,test_accuracy,feature_hit_pct,forced_evictions\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%.17g,%llu\n", c.p_grad, format_t_stale(c.t_stale).c_str(),
                  c.io_saving_pct, c.test_accuracy, c.feature_hit_pct,
                  static_cast<unsigned long long>(c.forced_evictions));
    out << buf;
  }
}

void write_accuracy_json(std::ostream& out, const TrainSummary& summary, const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["val_accuracy"] = summary.val_accuracy;
  j["test_accuracy"] = summary.test_accuracy;
  j["iterations"] = summary.metrics.size();
  j["epoch_io_saving_pct"] = summary.io_saving_pct;
  j["p_grad"] = cfg.policy.p_grad;
  j["t_stale"] = format_t_stale(cfg.policy.t_stale);
  j["cache_capacity"] = cfg.policy.capacity;
  j["seed"] = cfg.seed;
  const auto& c = summary.cache_totals;
  j["cache"] = {{"hits", c.hits},
                {"misses", c.misses},
                {"admissions", c.admissions},
                {"gradient_evictions", c.gradient_evictions},
                {"staleness_evictions", c.staleness_evictions},
                {"forced_evictions", c.forced_evictions},
                {"staleness_violations", c.staleness_violations}};
  out << j.dump(2) << '\n';
}

}  // namespace hgnn
