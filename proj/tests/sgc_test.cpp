#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "hgnn/sgc.hpp"

namespace hgnn {
namespace {

Eigen::MatrixXd to_eigen(const Matrix<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix<double> gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<double> m(r, c);
  for (auto& v : m.storage()) v = g(rng);
  return m;
}

TEST(Lipschitz, IdentityIsOne) {
  Matrix<double> eye(6, 6);
  for (std::size_t i = 0; i < 6; ++i) eye(i, i) = 1.0;
  EXPECT_NEAR(estimate_lipschitz(eye, SgcLoss::LEAST_SQUARES), 1.0, 1e-12);
}

TEST(Lipschitz, MatchesEigenSolver) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = gaussian(20, 5, seed);
    Eigen::MatrixXd e = to_eigen(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.transpose() * e);
    const double want = es.eigenvalues().maxCoeff();
    const double got = estimate_lipschitz(x, SgcLoss::LEAST_SQUARES, 1e-14);
    EXPECT_NEAR(got, want, 1e-6 * want) << "seed " << seed;
    EXPECT_NEAR(estimate_lipschitz(x, SgcLoss::SOFTMAX_CE, 1e-14), 0.5 * want, 1e-6 * want);

    auto scaled = x;
    for (auto& v : scaled.storage()) v *= 3.0;
    EXPECT_NEAR(estimate_lipschitz(scaled, SgcLoss::LEAST_SQUARES, 1e-14), 9.0 * want, 1e-5 * want);
  }
}

TEST(Propagate, MatchesDenseProduct) {
  auto prob = make_sgc_problem({30, 4, 2, 3, 4, 7});
  auto a = normalize_adjacency(prob.graph);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(30, 30);
  for (std::size_t v = 0; v < 30; ++v)
    for (auto e = a.row_offsets[v]; e < a.row_offsets[v + 1]; ++e) dense(v, a.cols[e]) += a.weights[e];
  Eigen::MatrixXd want = dense * dense * dense * to_eigen(prob.x);
  EXPECT_LT((to_eigen(prob.hat_x) - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PTau, UniformSumsToOne) {
  for (std::size_t s : {1u, 5u, 20u}) {
    auto p = uniform_p_tau(0.3, s);
    ASSERT_EQ(p.size(), s + 1);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-15);
    EXPECT_EQ(p[0], 0.3);
  }
  EXPECT_EQ(uniform_p_tau(1.0, 0), std::vector<double>{1.0});
  EXPECT_THROW(uniform_p_tau(0.5, 0), std::invalid_argument);
  EXPECT_THROW(uniform_p_tau(0.0, 3), std::invalid_argument);
  EXPECT_THROW(uniform_p_tau(1.5, 3), std::invalid_argument);
}

TEST(Selector, PartitionsRowsWithExpectedFrequencies) {
  const std::vector<double> p{0.5, 0.2, 0.2, 0.1};
  Rng rng(11);
  const std::size_t n = 10000;
  auto d = draw_selector(n, p, rng);
  ASSERT_EQ(d.xi.size(), n);
  // Each row lands in exactly one S_tau, so the selectors sum to I.
  std::vector<std::size_t> count(p.size(), 0);
  for (auto x : d.xi) {
    ASSERT_LT(x, p.size());
    ++count[x];
  }
  for (std::size_t tau = 0; tau < p.size(); ++tau) {
    const double sigma = std::sqrt(n * p[tau] * (1 - p[tau]));
    EXPECT_NEAR(static_cast<double>(count[tau]), n * p[tau], 3 * sigma) << "tau " << tau;
  }
}

TEST(SgcStep, FullFreshnessIsGradientDescent) {
  auto prob = make_sgc_problem({50, 8, 3, 2, 4, 2});
  Rng init_a(5), init_b(5);
  auto hist = init_sgc_state(prob.hat_x, 3, 2, 0, 1.0, 0.0, SgcLoss::LEAST_SQUARES, init_a);
  auto plain = init_sgc_state(prob.hat_x, 3, 2, 0, 1.0, 0.0, SgcLoss::LEAST_SQUARES, init_b);
  Rng rng(9);
  for (int step = 0; step < 25; ++step) {
    sgc_hist_step(hist, prob.y, rng);
    auto g = exact_gradient(SgcLoss::LEAST_SQUARES, plain.hat_x, plain.w, prob.y);
    for (std::size_t i = 0; i < plain.w.size(); ++i) plain.w.storage()[i] -= plain.eta * g.storage()[i];
    ASSERT_EQ(hist.w, plain.w) << "step " << step;
  }
}

TEST(SgcStep, MaskedGradientMatchesDenseOracle) {
  auto prob = make_sgc_problem({40, 6, 3, 2, 4, 3});
  for (auto loss : {SgcLoss::LEAST_SQUARES, SgcLoss::SOFTMAX_CE}) {
    Matrix<double> y = prob.y;
    if (loss == SgcLoss::SOFTMAX_CE) {
      y.fill(0.0);
      for (std::size_t i = 0; i < y.rows(); ++i) y(i, i % 3) = 1.0;
    }
    Rng init(1);
    auto st = init_sgc_state(prob.hat_x, 3, 2, 4, 0.4, 0.0, loss, init);
    Rng rng(21);
    for (int step = 0; step < 12; ++step) {
      const Eigen::MatrixXd w_before = to_eigen(st.w);
      auto out = sgc_hist_step(st, y, rng);
      EXPECT_LE(out.identity_violation, 1e-10);
      // Oracle: hat_x^T S0 dL/dZ~, with dL/dZ~ computed independently.
      Eigen::MatrixXd zt = to_eigen(out.z_tilde);
      Eigen::MatrixXd ye = to_eigen(y);
      Eigen::MatrixXd dz(zt.rows(), zt.cols());
      for (Eigen::Index i = 0; i < zt.rows(); ++i) {
        if (loss == SgcLoss::LEAST_SQUARES) {
          dz.row(i) = zt.row(i) - ye.row(i);
        } else {
          Eigen::RowVectorXd e = (zt.row(i).array() - zt.row(i).maxCoeff()).exp();
          dz.row(i) = e / e.sum() - ye.row(i);
        }
      }
      Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(zt.rows(), zt.rows());
      for (std::size_t i = 0; i < out.draw.xi.size(); ++i)
        if (out.draw.xi[i] == 0) s0(i, i) = 1.0;
      Eigen::MatrixXd want = to_eigen(st.hat_x).transpose() * s0 * dz;
      EXPECT_LT((to_eigen(out.grad_used) - want).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((to_eigen(st.w) - (w_before - st.eta * want)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(SgcStep, StaleRowsComeFromHistory) {
  auto prob = make_sgc_problem({30, 4, 2, 1, 4, 4});
  Rng init(2);
  auto st = init_sgc_state(prob.hat_x, 2, 1, 3, 0.3, 0.0, SgcLoss::LEAST_SQUARES, init);
  Rng rng(3);
  std::vector<Matrix<double>> past;
  for (int step = 0; step < 10; ++step) {
    auto out = sgc_hist_step(st, prob.y, rng);
    for (std::size_t i = 0; i < out.draw.xi.size(); ++i) {
      const std::size_t tau = out.draw.xi[i];
      if (tau == 0) continue;
      const std::size_t age = std::min<std::size_t>(tau, past.size());
      const auto& src = past[past.size() - age];
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(out.z_tilde(i, j), src(i, j));
    }
    past.push_back(out.z_tilde);
  }
  EXPECT_LE(st.history.size(), 3u);
}

TEST(Convergence, ReachesStationarityAndRespectsBound) {
  auto prob = make_sgc_problem({100, 16, 4, 2, 4, 0});
  const double l = estimate_lipschitz(prob.hat_x, SgcLoss::LEAST_SQUARES);
  Rng init(1), rng(2);
  auto st = init_sgc_state(prob.hat_x, 4, 2, 5, 0.5, 1.0 / l, SgcLoss::LEAST_SQUARES, init);
  const double l0 = loss_value(SgcLoss::LEAST_SQUARES, matmul(st.hat_x, st.w), prob.y);
  auto trace = run_convergence(st, prob.y, 2000, rng);
  ASSERT_EQ(trace.rows.size(), 2001u);
  EXPECT_LT(trace.min_grad_norm(), 1e-3);
  EXPECT_LE(trace.max_identity_violation(), 1e-10);
  double prev = trace.min_grad_norm(0);
  for (std::size_t t = 1; t < trace.rows.size(); t += 97) {
    const double cur = trace.min_grad_norm(t);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  const double m = trace.min_grad_norm();
  EXPECT_LE(m * m, convergence_bound(l0, 0.0, 2000, st.eta, 0.5, l));
}

TEST(Convergence, DivergenceIsReported) {
  auto prob = make_sgc_problem({40, 6, 2, 2, 4, 1});
  const double l = estimate_lipschitz(prob.hat_x, SgcLoss::LEAST_SQUARES);
  Rng init(1), rng(2);
  auto st = init_sgc_state(prob.hat_x, 2, 2, 0, 1.0, 5.0 / l, SgcLoss::LEAST_SQUARES, init);
  EXPECT_THROW(run_convergence(st, prob.y, 2000, rng), std::runtime_error);
}

TEST(Convergence, BoundFormulaAndErrors) {
  EXPECT_DOUBLE_EQ(convergence_bound(10.0, 0.0, 9, 0.5, 0.5, 1.0), 10.0 / (10 * 0.5 * 0.5 * 0.75));
  EXPECT_THROW(convergence_bound(1.0, 0.0, 10, 2.0, 0.5, 1.0), std::invalid_argument);
}

TEST(Convergence, TraceCsv) {
  ConvergenceTrace tr;
  tr.rows.push_back({0, 1.5, 2.0, 0.0});
  tr.rows.push_back({1, 0.25, 0.5, 0.0});
  std::ostringstream out;
  write_trace_csv(out, tr);
  EXPECT_EQ(out.str(), "t,grad_norm,loss,identity_violation_max\n0,1.5,2,0\n1,0.25,0.5,0\n");
}

TEST(SgcState, ValidateRejectsBadState) {
  auto prob = make_sgc_problem({20, 3, 2, 1, 3, 0});
  Rng init(0);
  auto st = init_sgc_state(prob.hat_x, 2, 1, 2, 0.5, 0.1, SgcLoss::LEAST_SQUARES, init);
  auto bad = st;
  bad.p_tau = {0.5, 0.4, 0.2};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = st;
  bad.eta = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = st;
  bad.w = Matrix<double>(5, 2);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace hgnn
