#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include "hgnn/graph_store.hpp"
#include "hgnn/matrix.hpp"
#include "hgnn/types.hpp"

namespace hgnn {

// Single-layer SGC, Z = A_hat^k X W, trained with a random staleness
// selector: row i of the embedding used at step t comes from the snapshot
// of age xi_i, and only fresh rows (xi_i = 0) carry gradient.

enum class SgcLoss {
  LEAST_SQUARES,  // 0.5 * ||Z - Y||_F^2, Y real n x c
  SOFTMAX_CE,     // sum over rows of softmax cross-entropy, Y one-hot n x c
};

/// A_hat^k X.
Matrix<double> propagate(const AdjacencyMatrixNorm& a_hat, const Matrix<double>& x, std::size_t k);

/// p_0 for fresh rows, the rest spread evenly over ages 1..s.
std::vector<double> uniform_p_tau(double p0, std::size_t s);

struct SelectorDraw {
  std::vector<std::uint32_t> xi;  // per row, in [0, s]
};

SelectorDraw draw_selector(std::size_t n, const std::vector<double>& p_tau, Rng& rng);

struct SgcState {
  Matrix<double> hat_x;
  Matrix<double> w;
  std::deque<Matrix<double>> history;  // history[0] is Z~ from the previous step
  std::vector<double> p_tau;
  std::size_t s = 0;
  double eta = 0.0;
  std::size_t k = 0;
  std::uint64_t t = 0;
  SgcLoss loss = SgcLoss::LEAST_SQUARES;

  /// Throws std::invalid_argument on inconsistent shapes or p_tau.
  void validate() const;
};

/// gradient of the loss w.r.t. Z, evaluated at z.
Matrix<double> loss_grad_z(SgcLoss loss, const Matrix<double>& z, const Matrix<double>& y);
double loss_value(SgcLoss loss, const Matrix<double>& z, const Matrix<double>& y);
/// Exact gradient of l(W) = L(hat_x W, Y).
Matrix<double> exact_gradient(SgcLoss loss, const Matrix<double>& hat_x, const Matrix<double>& w,
                              const Matrix<double>& y);

struct SgcStep {
  SelectorDraw draw;
  Matrix<double> grad_used;
  Matrix<double> z_exact;
  Matrix<double> z_tilde;
  /// max |(S0 Z)_ij - (S0 Z~)_ij|
  double identity_violation = 0.0;
};

/// One update W <- W - eta * hat_x^T S0 dL/dZ~.
SgcStep sgc_hist_step(SgcState& state, const Matrix<double>& y, Rng& rng);

/// Smoothness constant: lambda_max(hat_x^T hat_x) for least squares, half
/// of it for softmax cross-entropy. Power iteration to relative tol.
double estimate_lipschitz(const Matrix<double>& hat_x, SgcLoss loss, double tol = 1e-8,
                          std::size_t max_iter = 100000);

struct ConvergenceRow {
  std::uint64_t t = 0;
  double grad_norm = 0.0;
  double loss = 0.0;
  double identity_violation_max = 0.0;
};

struct ConvergenceTrace {
  std::vector<ConvergenceRow> rows;
  /// min over t <= upto of grad_norm (all rows when upto is past the end).
  [[nodiscard]] double min_grad_norm(std::size_t upto = static_cast<std::size_t>(-1)) const;
  [[nodiscard]] double max_identity_violation() const;
};

/// Records ||grad l(W^(t))||_F for t = 0..T, stepping between records.
/// Throws std::runtime_error if the norm exceeds 1e6.
ConvergenceTrace run_convergence(SgcState& state, const Matrix<double>& y, std::size_t T, Rng& rng);

void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace);

/// Right-hand side of the stationarity bound:
/// (l0 - l*) / ((T + 1) * eta * p0 * (1 - L * eta / 2)).
double convergence_bound(double l0, double l_star, std::size_t T, double eta, double p0, double lipschitz);

struct SgcProblemParams {
  std::size_t n = 100;
  std::size_t d = 16;
  std::size_t c = 4;
  std::size_t k = 2;
  std::size_t avg_degree = 4;
  std::uint64_t seed = 0;
};

struct SgcProblem {
  CooGraph graph;
  Matrix<double> x;
  Matrix<double> hat_x;
  Matrix<double> y;       // realizable targets hat_x * w_true
  Matrix<double> w_true;
};

/// Random undirected graph with Gaussian features and targets in the
/// column space of hat_x, so the least-squares optimum has zero loss.
SgcProblem make_sgc_problem(const SgcProblemParams& params);

/// State with W^(0) ~ N(0, w0_scale^2), empty history, eta = 1/L when eta <= 0.
SgcState init_sgc_state(const Matrix<double>& hat_x, std::size_t out_dim, std::size_t k, std::size_t s, double p0,
                        double eta, SgcLoss loss, Rng& rng, double w0_scale = 0.1);

}  // namespace hgnn
