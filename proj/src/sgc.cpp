#include "hgnn/sgc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace hgnn {

Matrix<double> propagate(const AdjacencyMatrixNorm& a_hat, const Matrix<double>& x, std::size_t k) {
  if (x.rows() != a_hat.num_nodes) throw std::invalid_argument("propagate: feature rows != node count");
  Matrix<double> cur = x;
  Matrix<double> next(x.rows(), x.cols());
  for (std::size_t step = 0; step < k; ++step) {
    next.fill(0.0);
    for (std::size_t v = 0; v < a_hat.num_nodes; ++v) {
      auto out = next.row(v);
      for (auto e = a_hat.row_offsets[v]; e < a_hat.row_offsets[v + 1]; ++e) {
        const double w = a_hat.weights[e];
        auto in = cur.row(a_hat.cols[e]);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * in[j];
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

std::vector<double> uniform_p_tau(double p0, std::size_t s) {
  if (!(p0 > 0.0 && p0 <= 1.0)) throw std::invalid_argument("uniform_p_tau: p0 must be in (0, 1]");
  if (s == 0 && p0 != 1.0) throw std::invalid_argument("uniform_p_tau: s = 0 requires p0 = 1");
  std::vector<double> p(s + 1, s == 0 ? 0.0 : (1.0 - p0) / static_cast<double>(s));
  p[0] = p0;
  return p;
}

SelectorDraw draw_selector(std::size_t n, const std::vector<double>& p_tau, Rng& rng) {
  SelectorDraw d;
  d.xi.resize(n);
  std::discrete_distribution<std::uint32_t> dist(p_tau.begin(), p_tau.end());
  for (auto& x : d.xi) x = dist(rng);
  return d;
}

void SgcState::validate() const {
  if (hat_x.rows() == 0 || hat_x.cols() == 0) throw std::invalid_argument("SgcState: empty hat_x");
  if (w.rows() != hat_x.cols()) throw std::invalid_argument("SgcState: W rows must equal feature width");
  if (p_tau.size() != s + 1) throw std::invalid_argument("SgcState: p_tau must have s + 1 entries");
  double sum = 0.0;
  for (double p : p_tau) {
    if (p < 0.0) throw std::invalid_argument("SgcState: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("SgcState: p_tau does not sum to 1");
  if (s == 0 && p_tau[0] != 1.0) throw std::invalid_argument("SgcState: s = 0 with p0 != 1");
  if (!(eta > 0.0)) throw std::invalid_argument("SgcState: eta must be positive");
  if (history.size() > s) throw std::invalid_argument("SgcState: history longer than s");
}

Matrix<double> loss_grad_z(SgcLoss loss, const Matrix<double>& z, const Matrix<double>& y) {
  if (z.rows() != y.rows() || z.cols() != y.cols()) throw std::invalid_argument("loss_grad_z: shape mismatch");
  Matrix<double> g(z.rows(), z.cols());
  if (loss == SgcLoss::LEAST_SQUARES) {
    for (std::size_t i = 0; i < g.size(); ++i) g.storage()[i] = z.storage()[i] - y.storage()[i];
    return g;
  }
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zr = z.row(i);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double sum = 0.0;
    for (double v : zr) sum += std::exp(v - mx);
    auto gr = g.row(i);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < zr.size(); ++j) gr[j] = std::exp(zr[j] - mx) / sum - yr[j];
  }
  return g;
}

double loss_value(SgcLoss loss, const Matrix<double>& z, const Matrix<double>& y) {
  if (z.rows() != y.rows() || z.cols() != y.cols()) throw std::invalid_argument("loss_value: shape mismatch");
  double total = 0.0;
  if (loss == SgcLoss::LEAST_SQUARES) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double r = z.storage()[i] - y.storage()[i];
      total += r * r;
    }
    return 0.5 * total;
  }
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zr = z.row(i);
    auto yr = y.row(i);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double sum = 0.0;
    for (double v : zr) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < zr.size(); ++j) total += yr[j] * (lse - zr[j]);
  }
  return total;
}

Matrix<double> exact_gradient(SgcLoss loss, const Matrix<double>& hat_x, const Matrix<double>& w,
                              const Matrix<double>& y) {
  return matmul_tn(hat_x, loss_grad_z(loss, matmul(hat_x, w), y));
}

SgcStep sgc_hist_step(SgcState& state, const Matrix<double>& y, Rng& rng) {
  const std::size_t n = state.hat_x.rows();
  SgcStep out;
  out.z_exact = matmul(state.hat_x, state.w);
  if (state.t == 0) {
    // No history yet: every row is fresh (S0 = I).
    out.draw.xi.assign(n, 0);
  } else {
    out.draw = draw_selector(n, state.p_tau, rng);
  }
  out.z_tilde = out.z_exact;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t tau = out.draw.xi[i];
    if (tau == 0) continue;
    // Ages beyond the recorded history fall back to the oldest snapshot.
    const std::size_t age = std::min(tau, state.history.size());
    auto src = state.history[age - 1].row(i);
    std::copy(src.begin(), src.end(), out.z_tilde.row(i).begin());
  }

  Matrix<double> g = loss_grad_z(state.loss, out.z_tilde, y);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.draw.xi[i] == 0) {
      auto a = out.z_exact.row(i);
      auto b = out.z_tilde.row(i);
      for (std::size_t j = 0; j < a.size(); ++j)
        out.identity_violation = std::max(out.identity_violation, std::abs(a[j] - b[j]));
    } else {
      auto gr = g.row(i);
      std::fill(gr.begin(), gr.end(), 0.0);
    }
  }
  out.grad_used = matmul_tn(state.hat_x, g);
  for (std::size_t i = 0; i < state.w.size(); ++i) state.w.storage()[i] -= state.eta * out.grad_used.storage()[i];

  if (state.s > 0) {
    state.history.push_front(out.z_tilde);
    if (state.history.size() > state.s) state.history.pop_back();
  }
  ++state.t;
  return out;
}

double estimate_lipschitz(const Matrix<double>& hat_x, SgcLoss loss, double tol, std::size_t max_iter) {
  const std::size_t d = hat_x.cols();
  if (d == 0) return 0.0;
  Rng rng(0x5eed1ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix<double> v(d, 1);
  for (auto& x : v.storage()) x = gauss(rng) + 1.0;
  auto normalize = [](Matrix<double>& m) {
    const double nrm = frobenius_norm(m);
    if (nrm == 0.0) return 0.0;
    for (auto& x : m.storage()) x /= nrm;
    return nrm;
  };
  normalize(v);
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix<double> w = matmul_tn(hat_x, matmul(hat_x, v));
    // Rayleigh quotient of the normalized iterate.
    double next = 0.0;
    for (std::size_t i = 0; i < d; ++i) next += v.storage()[i] * w.storage()[i];
    const double nrm = normalize(w);
    v = std::move(w);
    if (nrm == 0.0) return 0.0;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return loss == SgcLoss::LEAST_SQUARES ? lambda : 0.5 * lambda;
}

double ConvergenceTrace::min_grad_norm(std::size_t upto) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size() && i <= upto; ++i) best = std::min(best, rows[i].grad_norm);
  return best;
}

double ConvergenceTrace::max_identity_violation() const {
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.identity_violation_max);
  return worst;
}

ConvergenceTrace run_convergence(SgcState& state, const Matrix<double>& y, std::size_t T, Rng& rng) {
  state.validate();
  ConvergenceTrace trace;
  trace.rows.reserve(T + 1);
  double violation = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    const Matrix<double> z = matmul(state.hat_x, state.w);
    const double gnorm = frobenius_norm(matmul_tn(state.hat_x, loss_grad_z(state.loss, z, y)));
    if (!(gnorm <= 1e6))
      throw std::runtime_error("run_convergence: gradient norm " + std::to_string(gnorm) + " at t=" +
                               std::to_string(t) + " (diverged; eta=" + std::to_string(state.eta) + ")");
    trace.rows.push_back({state.t, gnorm, loss_value(state.loss, z, y), violation});
    if (t == T) break;
    violation = sgc_hist_step(state, y, rng).identity_violation;
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace) {
  out << "t,grad_norm,loss,identity_violation_max\n";
  char buf[128];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(r.t), r.grad_norm,
                  r.loss, r.identity_violation_max);
    out << buf;
  }
}

double convergence_bound(double l0, double l_star, std::size_t T, double eta, double p0, double lipschitz) {
  const double denom = static_cast<double>(T + 1) * eta * p0 * (1.0 - lipschitz * eta / 2.0);
  if (!(denom > 0.0)) throw std::invalid_argument("convergence_bound: need eta < 2/L and p0 > 0");
  return (l0 - l_star) / denom;
}

SgcProblem make_sgc_problem(const SgcProblemParams& p) {
  if (p.n < 2 || p.d == 0 || p.c == 0) throw std::invalid_argument("make_sgc_problem: bad shape");
  Rng rng(derive_seed(p.seed, 0x56c));
  SgcProblem prob;
  prob.graph.num_nodes = p.n;
  // Erdos-Renyi with the requested mean degree, stored in both directions.
  const double q = std::min(1.0, static_cast<double>(p.avg_degree) / static_cast<double>(p.n - 1));
  std::bernoulli_distribution edge(q);
  for (std::size_t a = 0; a < p.n; ++a)
    for (std::size_t b = a + 1; b < p.n; ++b)
      if (edge(rng)) {
        prob.graph.add_edge(static_cast<NodeId>(a), static_cast<NodeId>(b));
        prob.graph.add_edge(static_cast<NodeId>(b), static_cast<NodeId>(a));
      }
  std::normal_distribution<double> gauss(0.0, 1.0);
  prob.x = Matrix<double>(p.n, p.d);
  for (auto& v : prob.x.storage()) v = gauss(rng);
  prob.hat_x = propagate(normalize_adjacency(prob.graph), prob.x, p.k);
  prob.w_true = Matrix<double>(p.d, p.c);
  for (auto& v : prob.w_true.storage()) v = gauss(rng);
  prob.y = matmul(prob.hat_x, prob.w_true);
  return prob;
}

SgcState init_sgc_state(const Matrix<double>& hat_x, std::size_t out_dim, std::size_t k, std::size_t s, double p0,
                        double eta, SgcLoss loss, Rng& rng, double w0_scale) {
  SgcState st;
  st.hat_x = hat_x;
  st.k = k;
  st.s = s;
  st.loss = loss;
  st.p_tau = uniform_p_tau(p0, s);
  st.eta = eta > 0.0 ? eta : 1.0 / estimate_lipschitz(hat_x, loss);
  st.w = Matrix<double>(hat_x.cols(), out_dim);
  std::normal_distribution<double> gauss(0.0, w0_scale);
  for (auto& v : st.w.storage()) v = gauss(rng);
  st.validate();
  return st;
}

}  // namespace hgnn
