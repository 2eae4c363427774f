#include <nsq/condense.hpp>
#include <nsq/random.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace nsq;

namespace {

// Coefficient j of (1 + ... + z^{lt-1})^r by counting r-tuples in [0, lt) summing to j.
std::vector<double> composition_counts(int r, std::size_t lt) {
  std::vector<double> v(static_cast<std::size_t>(r) * (lt - 1) + 1, 0.0);
  std::vector<std::size_t> digits(static_cast<std::size_t>(r), 0);
  for (;;) {
    std::size_t sum = 0;
    for (auto d : digits) sum += d;
    v[sum] += 1.0;
    std::size_t i = 0;
    while (i < digits.size() && ++digits[i] == lt) digits[i++] = 0;
    if (i == digits.size()) break;
  }
  return v;
}

using Matrix = std::vector<std::vector<double>>;

Matrix condensation_matrix(const Condenser& c) {
  Matrix v(c.p(), std::vector<double>(c.m(), 0.0));
  for (std::size_t l = 0; l < c.p(); ++l)
    for (std::size_t j = 0; j < c.lambda(); ++j) v[l][l * c.lambda() + j] = c.scale() * c.v()[j];
  return v;
}

Matrix difference_power(std::size_t m, int r) {
  Matrix out(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) out[i][i] = 1.0;
  for (int k = 0; k < r; ++k) {
    Matrix next(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) next[i][j] = out[i][j] - (j + 1 < m ? out[i][j + 1] : 0.0);
    out = std::move(next);
  }
  return out;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      if (a[i][k] != 0.0)
        for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += a[i][j] * x[j];
  return out;
}

double norm2(const std::vector<double>& x) {
  double s = 0;
  for (double e : x) s += e * e;
  return std::sqrt(s);
}

std::vector<double> random_state(Rng& rng, std::size_t m, double bound) {
  std::uniform_real_distribution<double> d(-bound, bound);
  std::vector<double> u(m);
  for (auto& e : u) e = d(rng);
  return u;
}

}  // namespace

TEST(SdVector, PaperExamples) {
  EXPECT_EQ(sd_condensation_vector(1, 4), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(sd_condensation_vector(2, 3), (std::vector<double>{1, 2, 3, 2, 1}));
}

TEST(SdVector, BinomialCase) {
  EXPECT_EQ(sd_condensation_vector(3, 2), (std::vector<double>{1, 3, 3, 1}));
}

TEST(SdVector, MatchesCompositionCount) {
  for (int r = 1; r <= 4; ++r) {
    for (std::size_t lt = 1; lt <= 6; ++lt) {
      const auto v = sd_condensation_vector(r, lt);
      EXPECT_EQ(v, composition_counts(r, lt)) << r << "," << lt;
      EXPECT_EQ(v.size(), static_cast<std::size_t>(r) * lt - r + 1);
      double sum = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        EXPECT_GT(v[j], 0.0);
        EXPECT_EQ(v[j], v[v.size() - 1 - j]);
        sum += v[j];
      }
      EXPECT_EQ(sum, std::pow(double(lt), r));
    }
  }
}

TEST(SdVector, RejectsBadParameters) {
  EXPECT_THROW(sd_condensation_vector(0, 3), ParameterError);
  EXPECT_THROW(sd_condensation_vector(2, 0), ParameterError);
}

TEST(LambdaTilde, Solves) {
  EXPECT_EQ(lambda_tilde_for(1, 7).value(), 7u);
  EXPECT_EQ(lambda_tilde_for(2, 5).value(), 3u);
  EXPECT_FALSE(lambda_tilde_for(2, 4).has_value());
  EXPECT_EQ(lambda_tilde_for(3, 7).value(), 3u);
  EXPECT_THROW(Condenser::sigma_delta_for_lambda(2, 16, 2, Scaling::raw), ParameterError);
  EXPECT_EQ(Condenser::sigma_delta_for_lambda(2, 17, 2, Scaling::raw).lambda(), 17u);
}

TEST(BetaVector, Geometric) {
  EXPECT_EQ(beta_condensation_vector(2.0, 3), (std::vector<double>{0.5, 0.25, 0.125}));
  EXPECT_EQ(beta_condensation_vector(3.0, 1), (std::vector<double>{1.0 / 3.0}));
  const auto v = beta_condensation_vector(10.0 / 9.0, 12);
  for (std::size_t j = 1; j < v.size(); ++j) EXPECT_LT(v[j], v[j - 1]);
  EXPECT_THROW(beta_condensation_vector(1.0, 3), ParameterError);
  EXPECT_THROW(beta_condensation_vector(2.0, 0), ParameterError);
}

TEST(BetaVector, AnnihilatesTransferExceptLast) {
  for (double beta : {1.05, 10.0 / 9.0, 2.0}) {
    for (std::size_t lambda : {1u, 4u, 10u}) {
      const auto v = beta_condensation_vector(beta, lambda);
      // (v H_beta)_j = v_j - beta v_{j+1}
      for (std::size_t j = 0; j < lambda; ++j) {
        const double next = j + 1 < lambda ? v[j + 1] : 0.0;
        const double expected = j + 1 < lambda ? 0.0 : std::pow(beta, -double(lambda));
        EXPECT_NEAR(v[j] - beta * next, expected, 1e-15);
      }
    }
  }
}

TEST(Condense, BlockSums) {
  const Condenser c({1, 1}, 2, Scaling::raw, SigmaDeltaFlavor{1, 2});
  EXPECT_EQ(c.condense(std::vector<double>{1, 2, 3, 4}), (std::vector<double>{3, 7}));
}

TEST(Condense, HatScaling) {
  const Condenser c({1, 1}, 2, Scaling::hat, SigmaDeltaFlavor{1, 2});
  const auto out = c.condense(std::vector<double>{1, 2, 3, 4});
  EXPECT_NEAR(out[0], 1.5, 1e-15);
  EXPECT_NEAR(out[1], 3.5, 1e-15);
}

TEST(Condense, TildeIsNineEighthsOfHat) {
  const auto hat = Condenser::beta(10.0 / 9.0, 8, 4, Scaling::hat);
  EXPECT_NEAR(hat.with_scaling(Scaling::tilde).scale(), 9.0 / 8.0 * hat.scale(), 1e-16);
  EXPECT_NEAR(hat.scale(), 1.0 / (hat.v_norm2() * 2.0), 1e-16);
}

TEST(Condense, ZeroAndMismatch) {
  const auto c = Condenser::sigma_delta(2, 3, 4, Scaling::tilde);
  for (double v : c.condense(std::vector<double>(c.m(), 0.0))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(c.condense(std::vector<double>(c.m() + 1, 0.0)), DimensionError);
}

TEST(Condense, ExpandIsAdjoint) {
  Rng rng(1);
  const auto c = Condenser::sigma_delta(2, 4, 5, Scaling::hat);
  const auto q = gaussian_vector(rng, c.m()), y = gaussian_vector(rng, c.p());
  std::vector<double> ey(c.m());
  c.expand(y, ey);
  double lhs = 0, rhs = 0;
  const auto cq = c.condense(q);
  for (std::size_t i = 0; i < c.p(); ++i) lhs += cq[i] * y[i];
  for (std::size_t i = 0; i < c.m(); ++i) rhs += q[i] * ey[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Condense, MatchesKroneckerMatrix) {
  Rng rng(2);
  const auto c = Condenser::beta(1.3, 5, 3, Scaling::tilde);
  const auto q = gaussian_vector(rng, c.m());
  const auto ref = matvec(condensation_matrix(c), q);
  const auto out = c.condense(q);
  for (std::size_t i = 0; i < c.p(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-13);
}

TEST(PseudoMetric, Basics) {
  Rng rng(3);
  const auto c = Condenser::sigma_delta(1, 4, 8, Scaling::tilde);
  auto code = [&] {
    std::vector<double> q(c.m());
    for (auto& e : q) e = random_sign(rng);
    return q;
  };
  for (int t = 0; t < 50; ++t) {
    const auto a = code(), b = code(), d = code();
    EXPECT_EQ(pseudo_metric(c, a, a), 0.0);
    EXPECT_EQ(pseudo_metric(c, a, b), pseudo_metric(c, b, a));
    EXPECT_LE(pseudo_metric(c, a, d), pseudo_metric(c, a, b) + pseudo_metric(c, b, d) + 1e-12);
  }
  EXPECT_THROW(pseudo_metric(c, std::vector<double>(3), std::vector<double>(c.m())), DimensionError);
}

TEST(PseudoMetric, SingleFlip) {
  const auto c = Condenser::sigma_delta(1, 4, 1, Scaling::tilde);
  std::vector<double> a(4, 1.0), b(4, 1.0);
  b[2] = -1.0;
  EXPECT_NEAR(pseudo_metric(c, a, b), 9.0 / 8.0, 1e-15);
}

TEST(VdrNorms, FirstOrderTelescopes) {
  const auto c = Condenser::sigma_delta(1, 4, 2, Scaling::raw);
  const auto norms = vdr_row_l1_norms(c, 8);
  for (double v : norms) EXPECT_LE(v, 2.0);
  const auto vd = multiply(condensation_matrix(c), difference_power(8, 1));
  for (std::size_t l = 1; l < 2; ++l) {
    int nonzero = 0;
    for (double e : vd[l]) {
      if (e != 0.0) {
        ++nonzero;
        EXPECT_EQ(std::abs(e), 1.0);
      }
    }
    EXPECT_EQ(nonzero, 2);
  }
}

TEST(VdrNorms, MatchesMaterializedProduct) {
  for (int r = 1; r <= 3; ++r) {
    for (std::size_t lt : {2u, 3u, 5u}) {
      const auto c = Condenser::sigma_delta(r, lt, 4, Scaling::raw);
      const auto vd = multiply(condensation_matrix(c), difference_power(c.m(), r));
      const auto norms = vdr_row_l1_norms(c, c.m());
      for (std::size_t l = 0; l < c.p(); ++l) {
        double l1 = 0;
        for (double e : vd[l]) l1 += std::abs(e);
        EXPECT_NEAR(norms[l], l1, 1e-9);
        EXPECT_LE(norms[l], r * std::pow(2.0, 3 * r - 1));
      }
    }
  }
}

TEST(VdrNorms, SecondOrderBound) {
  const auto c = Condenser::sigma_delta(2, 5, 8, Scaling::raw);
  for (double v : vdr_row_l1_norms(c, c.m())) EXPECT_LE(v, 32.0);
}

TEST(VdrNorms, Refusals) {
  EXPECT_THROW(vdr_row_l1_norms(Condenser::beta(1.1, 4, 2, Scaling::raw), 8), ParameterError);
  EXPECT_THROW(vdr_row_l1_norms(Condenser::sigma_delta(1, 2, 20000, Scaling::raw), 40000), BudgetError);
}

TEST(EtaBound, Examples) {
  EXPECT_NEAR(eta_bound(SigmaDeltaFlavor{1, 16}, 16, 1.0), 16.0, 1e-12);
  EXPECT_NEAR(eta_bound(BetaFlavor{10.0 / 9.0}, 10, 1.0), 0.387420489, 1e-9);
  EXPECT_EQ(eta_bound(BetaFlavor{1.5}, 1, 0.7), 0.7);
  EXPECT_THROW(eta_bound(BetaFlavor{1.5}, 0, 1.0), ParameterError);
  EXPECT_THROW(eta_bound(SigmaDeltaFlavor{1, 1}, 0, 1.0), ParameterError);
}

TEST(EtaBound, SigmaDeltaCondensedError) {
  Rng rng(4);
  for (int r : {1, 2}) {
    for (std::size_t lt : {2u, 5u, 9u}) {
      const auto c = Condenser::sigma_delta(r, lt, 4096 / (r * lt - r + 1) / 8, Scaling::tilde);
      if (c.m() > 4096) continue;
      const auto vdr = multiply(condensation_matrix(c), difference_power(c.m(), r));
      const double bound = eta_bound(c.flavor(), c.lambda(), 1.0);
      for (int t = 0; t < 20; ++t) {
        const auto u = random_state(rng, c.m(), 1.0);
        double inf = 0;
        for (double e : u) inf = std::max(inf, std::abs(e));
        EXPECT_LE(norm2(matvec(vdr, u)), bound * inf) << r << "," << lt;
      }
    }
  }
}

TEST(EtaBound, BetaCondensedError) {
  Rng rng(5);
  for (std::size_t lambda : {4u, 8u, 16u}) {
    const auto c = Condenser::beta(10.0 / 9.0, lambda, 16, Scaling::hat);
    for (double delta : {1.0, 0.25}) {
      for (int t = 0; t < 100; ++t) {
        const auto u = random_state(rng, c.m(), delta);
        const auto hu = apply_noise_transfer(Beta{10.0 / 9.0, lambda}, u);
        EXPECT_LE(norm2(c.condense(hu)), eta_bound(c.flavor(), lambda, delta));
      }
    }
  }
}

TEST(Gamma, Bounds) {
  for (int r = 1; r <= 3; ++r) {
    for (std::size_t lt = 1; lt <= 10; ++lt) {
      const auto c = Condenser::sigma_delta(r, lt, 1, Scaling::raw);
      EXPECT_LE(c.gamma() * c.gamma(), double(c.lambda()) + 1e-12);
    }
  }
  for (double beta : {1.01, 1.05, 10.0 / 9.0}) {
    for (std::size_t lambda : {1u, 5u, 50u, 500u}) {
      const auto c = Condenser::beta(beta, lambda, 1, Scaling::raw);
      EXPECT_LE(c.gamma() * c.gamma(), 2.0 * beta / (beta - 1.0));
    }
  }
}

TEST(SchemeFor, MatchesFlavor) {
  EXPECT_EQ(std::get<SigmaDelta>(scheme_for(SigmaDeltaFlavor{2, 3}, 5)).order, 2);
  const auto b = std::get<Beta>(scheme_for(BetaFlavor{1.2}, 7));
  EXPECT_EQ(b.beta, 1.2);
  EXPECT_EQ(b.block, 7u);
}
