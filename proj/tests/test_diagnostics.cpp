#include <nsq/diagnostics.hpp>

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace nsq;

namespace {

// delta_k by brute force on an explicit matrix, independent of the Gram routine.
double brute_rip(const Eigen::MatrixXd& a, std::size_t k) {
  const std::size_t n = static_cast<std::size_t>(a.cols());
  double worst = 0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != k) continue;
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(k));
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask >> j & 1u) sub.col(c++) = a.col(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(sub).singularValues();
    worst = std::max({worst, std::abs(sv(0) * sv(0) - 1.0), std::abs(sv(sv.size() - 1) * sv(sv.size() - 1) - 1.0)});
  }
  return worst;
}

Eigen::MatrixXd to_eigen(const DenseOperator& d) {
  Eigen::MatrixXd m(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) m(i, j) = d(i, j);
  return m;
}

}  // namespace

// Full Hadamard with p = m and lambda = 1 condenses to H / sqrt(n), an orthonormal matrix.
TEST(Rip, OrthonormalSquareIsIsometric) {
  const std::size_t n = 32;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const auto e = make_boe(EnsembleKind::boe_hadamard, n, rows, SignVector::ones(n));
  const auto hat = Condenser::beta(10.0 / 9.0, 1, n, Scaling::hat);
  EXPECT_LT(estimate_rip(e, hat, 4, 500, 1).delta, 1e-10);
  EXPECT_LT(exact_rip_small(e, hat, 2), 1e-10);
}

TEST(Rip, SingleTrialMatchesDirectComputation) {
  const auto e = sample_ensemble(EnsembleKind::pce, 64, 32, 5);
  const auto hat = Condenser::sigma_delta(1, 4, 8, Scaling::hat);
  const auto est = estimate_rip(e, hat, 3, 1, 77);
  Rng rng(derive_seed(77, 0));
  const auto x = random_sparse_unit(rng, 64, 3);
  const auto z = hat.condense(e.apply(x));
  double sq = 0;
  for (double v : z) sq += v * v;
  EXPECT_DOUBLE_EQ(est.delta, std::abs(sq - 1.0));
  EXPECT_FALSE(est.exact);
}

TEST(Rip, ThreadCountDoesNotChangeResult) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 128, 64, 5);
  const auto hat = Condenser::beta(10.0 / 9.0, 4, 16, Scaling::hat);
  const double a = estimate_rip(e, hat, 5, 1000, 3, 1).delta;
  EXPECT_EQ(estimate_rip(e, hat, 5, 1000, 3, 4).delta, a);
  EXPECT_EQ(estimate_rip(e, hat, 5, 1000, 3, 7).delta, a);
}

TEST(Rip, RejectsBadSparsity) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 16, 8, 5);
  const auto hat = Condenser::beta(10.0 / 9.0, 2, 4, Scaling::hat);
  EXPECT_THROW(estimate_rip(e, hat, 0, 10, 1), ParameterError);
  EXPECT_THROW(estimate_rip(e, hat, 17, 10, 1), ParameterError);
}

TEST(ExactRip, SparsityOneIsWorstColumnNorm) {
  Rng rng(3);
  const auto g = gaussian_vector(rng, 5 * 9);
  const DenseOperator d(5, 9, g);
  double worst = 0;
  for (std::size_t j = 0; j < 9; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 5; ++i) s += d(i, j) * d(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  EXPECT_NEAR(exact_rip_dense(d, 1), worst, 1e-12);
}

TEST(ExactRip, TwoColumnClosedForm) {
  // unit columns at angle theta: Gram eigenvalues 1 +- cos(theta)
  const double theta = 0.7;
  const DenseOperator d(2, 2, {1.0, std::cos(theta), 0.0, std::sin(theta)});
  EXPECT_NEAR(exact_rip_dense(d, 2), std::cos(theta), 1e-12);
}

TEST(ExactRip, MatchesSvdBruteForce) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto e = sample_ensemble(s % 2 ? EnsembleKind::pce : EnsembleKind::boe_dft_real, 16, 8, s);
    const auto hat = Condenser::beta(1.2, 2, 4, Scaling::hat);
    const auto d = materialize(CondensedOperator(e, hat));
    for (std::size_t k : {1u, 2u, 3u}) EXPECT_NEAR(exact_rip_dense(d, k), brute_rip(to_eigen(d), k), 1e-9);
  }
}

TEST(ExactRip, SampledNeverExceedsExact) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 32, 16, s);
    const auto hat = Condenser::sigma_delta(1, 2, 8, Scaling::hat);
    for (std::size_t k : {2u, 3u}) {
      EXPECT_LE(estimate_rip(e, hat, k, 3000, s).delta, exact_rip_small(e, hat, k) + 1e-9);
    }
  }
}

TEST(ExactRip, Budget) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 64, 32, 1);
  const auto hat = Condenser::beta(10.0 / 9.0, 2, 16, Scaling::hat);
  EXPECT_THROW(exact_rip_small(e, hat, 8), BudgetError);
  EXPECT_THROW(exact_rip_small(e, hat, 0), ParameterError);
  EXPECT_DOUBLE_EQ(detail::binomial_count(10, 3), 120.0);
  EXPECT_DOUBLE_EQ(detail::binomial_count(3, 10), 0.0);
}

// p = 1, lambda = 2, v = (1, 1): the cross term averages out, leaving <a1, x>^2 + <a2, x>^2.
TEST(Identity, TwoRowReduction) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 4, 2, 3);
  const Condenser cond({1.0, 1.0}, 1, Scaling::hat, BetaFlavor{});
  const std::vector<std::vector<double>> pts{{0.3, -1.0, 0.25, 2.0}};
  const auto rep = expectation_identity_check(e, cond, pts);
  const auto a = e.with_row_signs(SignVector::ones(2)).apply(pts[0]);
  EXPECT_NEAR(rep.cases[0].lhs, a[0] * a[0] + a[1] * a[1], 1e-12);
  EXPECT_LT(rep.max_relative_error, 1e-12);
}

TEST(Identity, HoldsForAllEnsembles) {
  struct Case {
    std::size_t n, m, p, lambda;
  };
  for (auto kind : {EnsembleKind::boe_hadamard, EnsembleKind::boe_dft_real, EnsembleKind::pce}) {
    for (const auto& c : {Case{8, 8, 2, 4}, Case{16, 12, 3, 4}, Case{16, 16, 4, 4}}) {
      const auto e = sample_ensemble(kind, c.n, c.m, c.n + c.m);
      for (const auto& cond : {Condenser::sigma_delta(1, c.lambda, c.p, Scaling::tilde),
                               Condenser::beta(10.0 / 9.0, c.lambda, c.p, Scaling::raw)}) {
        const auto rep = expectation_identity_check(e, cond, 5, 11);
        EXPECT_EQ(rep.cases.size(), 5u);
        EXPECT_LT(rep.max_relative_error, 1e-10) << to_string(kind) << " m=" << c.m;
      }
    }
  }
}

TEST(Identity, ZeroPoint) {
  const auto e = sample_ensemble(EnsembleKind::pce, 8, 8, 1);
  const auto cond = Condenser::sigma_delta(1, 4, 2, Scaling::raw);
  const std::vector<std::vector<double>> pts{std::vector<double>(8, 0.0)};
  const auto rep = expectation_identity_check(e, cond, pts);
  EXPECT_EQ(rep.cases[0].lhs, 0.0);
  EXPECT_EQ(rep.cases[0].rhs, 0.0);
  EXPECT_EQ(rep.max_relative_error, 0.0);
}

TEST(Identity, RefusesLargeM) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 32, 20, 1);
  EXPECT_THROW(expectation_identity_check(e, Condenser::beta(1.1, 4, 5, Scaling::raw), 1, 1), BudgetError);
  const auto e2 = sample_ensemble(EnsembleKind::boe_hadamard, 32, 16, 1);
  EXPECT_THROW(expectation_identity_check(e2, Condenser::beta(1.1, 4, 2, Scaling::raw), 1, 1), DimensionError);
}

TEST(Mrip, OrthonormalPassesEveryLevel) {
  const std::size_t n = 16;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const auto e = make_boe(EnsembleKind::boe_hadamard, n, rows, SignVector::ones(n));
  const auto rep = mrip_check(e, Condenser::beta(1.1, 1, n, Scaling::hat), 1, 0.1, 100, 1);
  ASSERT_EQ(rep.levels.size(), 5u);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.first_failure, -1);
  for (std::size_t l = 0; l < rep.levels.size(); ++l) {
    EXPECT_EQ(rep.levels[l].sparsity, std::min<std::size_t>(n, std::size_t{1} << l));
    EXPECT_NEAR(rep.levels[l].threshold, 0.1 * std::pow(2.0, l / 2.0), 1e-15);
  }
}

TEST(Mrip, ZeroAlphaFailsAtFirstLevel) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 16, 8, 2);
  const auto rep = mrip_check(e, Condenser::beta(1.1, 2, 4, Scaling::hat), 1, 0.0, 100, 1);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.first_failure, 0);
}

TEST(Mrip, LevelCountAndModes) {
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 64, 32, 2);
  const auto rep = mrip_check(e, Condenser::beta(1.1, 2, 16, Scaling::hat), 2, 0.5, 200, 1);
  ASSERT_EQ(rep.levels.size(), 7u);
  EXPECT_TRUE(rep.levels[0].exact);
  EXPECT_FALSE(rep.levels[3].exact);
  EXPECT_TRUE(rep.levels[6].exact);  // k = n has a single support
  EXPECT_THROW(mrip_check(e, Condenser::beta(1.1, 2, 16, Scaling::hat), 2, 0.5, 0, 1), BudgetError);
}

// More condensed rows means a better conditioned operator.
TEST(Rip, DecreasesWithP) {
  std::vector<double> med;
  for (std::size_t lambda : {8u, 4u, 2u, 1u}) {
    std::vector<double> d;
    for (std::uint64_t s = 0; s < 7; ++s) {
      const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 64, 32, derive_seed(lambda, s));
      d.push_back(estimate_rip(e, Condenser::sigma_delta(1, lambda, 32 / lambda, Scaling::hat), 3, 2000, s).delta);
    }
    std::sort(d.begin(), d.end());
    med.push_back(d[3]);
  }
  for (std::size_t i = 1; i < med.size(); ++i) EXPECT_LT(med[i], med[i - 1]) << i;
}
