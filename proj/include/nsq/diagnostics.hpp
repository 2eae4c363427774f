#pragma once

// Restricted-isometry diagnostics for V^ Phi: sampled and exhaustive RIP
// constants, the multiresolution profile, and the sign-averaging identity
//   E_eps ||V Phi x||^2 = sum_j v_j^2 ||A_{Omega_j} x||^2.

#include <nsq/condense.hpp>
#include <nsq/error.hpp>
#include <nsq/parallel.hpp>
#include <nsq/random.hpp>
#include <nsq/recover.hpp>
#include <nsq/transforms.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nsq {

struct RipEstimate {
  std::size_t k = 0;
  std::size_t trials = 0;
  double delta = 0.0;
  bool exact = false;
};

/// Random unit-norm k-sparse vector: uniform support, Gaussian values.
inline std::vector<double> random_sparse_unit(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<double> x(n, 0.0);
  const auto support = random_subset(rng, n, k);
  auto values = gaussian_vector(rng, k);
  const double nrm = detail::norm2(values);
  for (std::size_t i = 0; i < k; ++i) x[support[i]] = values[i] / nrm;
  return x;
}

/// max over `trials` random unit k-sparse x of | ||V^ Phi x||^2 - 1 |. Always a lower bound on delta_k.
inline RipEstimate estimate_rip(const StructuredEnsemble& ensemble, const Condenser& hat, std::size_t k,
                                std::size_t trials, std::uint64_t seed, std::size_t threads = 0) {
  if (k > ensemble.n()) throw ParameterError("estimate_rip: k exceeds n");
  if (k == 0) throw ParameterError("estimate_rip: k must be >= 1");
  const CondensedOperator op(ensemble, hat);
  const std::size_t chunks = std::min<std::size_t>(trials, 64);
  std::vector<double> worst(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    std::vector<double> out(op.rows());
    for (std::size_t t = c; t < trials; t += chunks) {
      const auto x = random_sparse_unit(rng, ensemble.n(), k);
      op.apply(x, out);
      double sq = 0.0;
      for (double e : out) sq += e * e;
      worst[c] = std::max(worst[c], std::abs(sq - 1.0));
    }
  });
  RipEstimate est;
  est.k = k;
  est.trials = trials;
  est.delta = trials == 0 ? 0.0 : *std::max_element(worst.begin(), worst.end());
  return est;
}

namespace detail {

inline double binomial_count(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

}  // namespace detail

inline constexpr double kExactRipBudget = 1e5;

/// delta_k of a dense matrix: max over supports |S| = k of ||M_S^T M_S - I||_2.
/// Supports smaller than k are covered by eigenvalue interlacing.
inline double exact_rip_dense(const DenseOperator& m, std::size_t k, double budget = kExactRipBudget) {
  const std::size_t n = m.cols();
  if (k == 0 || k > n) throw ParameterError("exact_rip: need 1 <= k <= n");
  if (detail::binomial_count(n, k) > budget) throw BudgetError("exact_rip: too many supports");
  Eigen::MatrixXd gram(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, a) * m(i, b);
      gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc;
      gram(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = acc;
    }
  }
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  Eigen::MatrixXd block(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  double worst = 0.0;
  for (;;) {
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            gram(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
      }
    }
    solver.compute(block, Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    worst = std::max({worst, std::abs(ev.minCoeff() - 1.0), std::abs(ev.maxCoeff() - 1.0)});
    // next k-combination in lexicographic order
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return worst;
}

inline double exact_rip_small(const StructuredEnsemble& ensemble, const Condenser& hat, std::size_t k,
                              double budget = kExactRipBudget) {
  if (k == 0 || k > ensemble.n()) throw ParameterError("exact_rip_small: need 1 <= k <= n");
  if (detail::binomial_count(ensemble.n(), k) > budget) throw BudgetError("exact_rip_small: too many supports");
  return exact_rip_dense(materialize(CondensedOperator(ensemble, hat)), k, budget);
}

struct IdentityCase {
  double lhs = 0.0;  // E_eps ||V Phi x||^2 by enumerating all 2^m sign patterns
  double rhs = 0.0;  // sum_j v_j^2 ||A_{Omega_j} x||^2
  double relative_error = 0.0;
};

struct IdentityReport {
  std::vector<IdentityCase> cases;
  double max_relative_error = 0.0;
};

inline constexpr std::size_t kMaxEnumeratedSigns = 16;

/// Checks the sign-averaging identity on `points` with every row-sign pattern enumerated.
/// The condenser is used unscaled (raw V).
inline IdentityReport expectation_identity_check(const StructuredEnsemble& ensemble, const Condenser& condenser,
                                                 std::span<const std::vector<double>> points) {
  const std::size_t m = ensemble.m();
  if (m > kMaxEnumeratedSigns) throw BudgetError("expectation_identity_check: m exceeds 16");
  detail::require_same_size(condenser.m(), m, "expectation_identity_check");
  const Condenser raw = condenser.with_scaling(Scaling::raw);
  const std::size_t lambda = raw.lambda(), p = raw.p();
  const auto unsigned_rows = ensemble.with_row_signs(SignVector::ones(m));
  IdentityReport rep;
  for (const auto& x : points) {
    IdentityCase c;
    const std::size_t patterns = std::size_t{1} << m;
    double sum = 0.0;
    SignVector eps = SignVector::ones(m);
    for (std::size_t mask = 0; mask < patterns; ++mask) {
      for (std::size_t j = 0; j < m; ++j) eps.entries[j] = (mask >> j) & 1u ? -1 : 1;
      const auto y = ensemble.with_row_signs(eps).apply(x);
      const auto z = raw.condense(y);
      for (double e : z) sum += e * e;
    }
    c.lhs = sum / static_cast<double>(patterns);
    // interleaved row sets Omega_j = {j, j + lambda, ..., j + (p-1) lambda}
    const auto a = unsigned_rows.apply(x);
    for (std::size_t j = 0; j < lambda; ++j) {
      double restricted = 0.0;
      for (std::size_t l = 0; l < p; ++l) restricted += a[j + l * lambda] * a[j + l * lambda];
      c.rhs += raw.v()[j] * raw.v()[j] * restricted;
    }
    const double denom = std::max(std::abs(c.lhs), std::abs(c.rhs));
    c.relative_error = denom > 0 ? std::abs(c.lhs - c.rhs) / denom : 0.0;
    rep.max_relative_error = std::max(rep.max_relative_error, c.relative_error);
    rep.cases.push_back(c);
  }
  return rep;
}

/// Same check on `count` random Gaussian points drawn from `seed`.
inline IdentityReport expectation_identity_check(const StructuredEnsemble& ensemble, const Condenser& condenser,
                                                 std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < count; ++i) pts.push_back(gaussian_vector(rng, ensemble.n()));
  return expectation_identity_check(ensemble, condenser, pts);
}

struct MripLevel {
  std::size_t level = 0;
  std::size_t sparsity = 0;
  double threshold = 0.0;
  double delta = 0.0;
  bool exact = false;
  bool pass = false;
};

struct MripReport {
  std::vector<MripLevel> levels;
  bool pass = true;
  int first_failure = -1;
};

/// For l = 0..ceil(log2 n): delta at sparsity min(2^l k, n) against 2^{l/2} alpha.
/// Exhaustive when the support count fits the budget, sampled otherwise.
inline MripReport mrip_check(const StructuredEnsemble& ensemble, const Condenser& hat, std::size_t base_k,
                             double base_alpha, std::size_t trials, std::uint64_t seed,
                             double budget = kExactRipBudget) {
  if (base_k == 0 || base_k > ensemble.n()) throw ParameterError("mrip_check: need 1 <= base_k <= n");
  const std::size_t n = ensemble.n();
  const std::size_t top = static_cast<std::size_t>(std::bit_width(n - 1));  // ceil(log2 n)
  const auto dense = materialize(CondensedOperator(ensemble, hat));
  MripReport rep;
  for (std::size_t l = 0; l <= top; ++l) {
    MripLevel lv;
    lv.level = l;
    lv.sparsity = std::min(n, base_k << l);
    lv.threshold = std::pow(2.0, static_cast<double>(l) / 2.0) * base_alpha;
    if (detail::binomial_count(n, lv.sparsity) <= budget) {
      lv.delta = exact_rip_dense(dense, lv.sparsity, budget);
      lv.exact = true;
    } else {
      if (trials == 0) throw BudgetError("mrip_check: level too large for enumeration and no trials given");
      lv.delta = estimate_rip(ensemble, hat, lv.sparsity, trials, derive_seed(seed, l)).delta;
    }
    lv.pass = lv.delta <= lv.threshold;
    if (!lv.pass && rep.pass) {
      rep.pass = false;
      rep.first_failure = static_cast<int>(l);
    }
    rep.levels.push_back(lv);
  }
  return rep;
}

}  // namespace nsq
