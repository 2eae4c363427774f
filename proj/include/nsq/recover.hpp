#pragma once

// Quantized compressed sensing: quantize Phi x, then decode with
//   min ||z||_1  s.t.  ||V^ Phi z - V^ q||_2 <= eta
// using a first-order primal-dual method with operator-only access.

#include <nsq/condense.hpp>
#include <nsq/error.hpp>
#include <nsq/quantize.hpp>
#include <nsq/random.hpp>
#include <nsq/transforms.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nsq {

template <typename Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.rows() } -> std::convertible_to<std::size_t>;
  { op.cols() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
  op.apply_adjoint(in, out);
};

/// Row-major dense matrix as an operator. Mostly for tests and tiny problems.
class DenseOperator {
 public:
  DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_same_size(data_.size(), rows_ * cols_, "DenseOperator");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  void apply(std::span<const double> x, std::span<double> out) const {
    detail::require_same_size(x.size(), cols_, "DenseOperator apply");
    for (std::size_t i = 0; i < rows_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) acc += data_[i * cols_ + j] * x[j];
      out[i] = acc;
    }
  }

  void apply_adjoint(std::span<const double> y, std::span<double> out) const {
    detail::require_same_size(y.size(), rows_, "DenseOperator adjoint");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) out[j] += data_[i * cols_ + j] * y[i];
    }
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

/// V Phi without materialization; adjoint is Phi^T V^T.
class CondensedOperator {
 public:
  CondensedOperator(const StructuredEnsemble& ensemble, const Condenser& condenser)
      : ensemble_(&ensemble), condenser_(&condenser) {
    if (condenser.m() != ensemble.m()) {
      throw DimensionError("CondensedOperator: condenser covers " + std::to_string(condenser.m()) +
                           " samples but the ensemble has m = " + std::to_string(ensemble.m()));
    }
  }

  std::size_t rows() const noexcept { return condenser_->p(); }
  std::size_t cols() const noexcept { return ensemble_->n(); }

  void apply(std::span<const double> x, std::span<double> out) const {
    const auto y = ensemble_->apply(x);
    condenser_->condense(y, out);
  }

  void apply_adjoint(std::span<const double> z, std::span<double> out) const {
    std::vector<double> expanded(condenser_->m());
    condenser_->expand(z, expanded);
    ensemble_->apply_adjoint(expanded, out);
  }

 private:
  const StructuredEnsemble* ensemble_;
  const Condenser* condenser_;
};

/// Materializes any operator column by column (row-major result).
template <LinearOperator Op>
DenseOperator materialize(const Op& op) {
  const std::size_t rows = op.rows(), cols = op.cols();
  std::vector<double> data(rows * cols);
  std::vector<double> unit(cols, 0.0), column(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    unit[j] = 1.0;
    op.apply(unit, column);
    unit[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) data[i * cols + j] = column[i];
  }
  return {rows, cols, std::move(data)};
}

namespace detail {

inline double norm2(std::span<const double> x) {
  double acc = 0.0;
  for (double e : x) acc += e * e;
  return std::sqrt(acc);
}

inline double norm1(std::span<const double> x) {
  double acc = 0.0;
  for (double e : x) acc += std::abs(e);
  return acc;
}

inline double norm_inf(std::span<const double> x) {
  double acc = 0.0;
  for (double e : x) acc = std::max(acc, std::abs(e));
  return acc;
}

}  // namespace detail

/// Largest singular value by power iteration on A^T A.
template <LinearOperator Op>
double operator_norm_estimate(const Op& op, std::size_t iterations = 100, std::uint64_t seed = 7) {
  Rng rng(seed);
  auto x = gaussian_vector(rng, op.cols());
  std::vector<double> ax(op.rows()), atax(op.cols());
  double sigma = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const double nx = detail::norm2(x);
    if (nx == 0.0) return 0.0;
    for (auto& e : x) e /= nx;
    op.apply(x, ax);
    op.apply_adjoint(ax, atax);
    const double next = std::sqrt(detail::norm2(atax));
    if (it > 5 && std::abs(next - sigma) <= 1e-10 * next) {
      sigma = next;
      break;
    }
    sigma = next;
    x = atax;
  }
  return sigma;
}

struct BpdnParams {
  double tolerance = 1e-6;
  std::size_t max_iterations = 20000;
  /// tau = step_ratio / ||A||, sigma = 1 / (step_ratio ||A||), both scaled by 0.99.
  double step_ratio = 1.0;
  std::size_t check_every = 10;
};

struct BpdnResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;  // ||A x - b||_2
  double objective = 0.0;      // ||x||_1
  double operator_norm = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/// min ||z||_1 s.t. ||A z - b||_2 <= eta, by the Chambolle-Pock primal-dual
/// iteration with fixed steps tau * sigma * ||A||^2 < 1.
template <LinearOperator Op>
BpdnResult bpdn_solve(const Op& op, std::span<const double> b, double eta, const BpdnParams& params = {}) {
  if (!(eta >= 0.0)) throw ParameterError("bpdn_solve: eta must be nonnegative");
  if (!(params.tolerance > 0.0)) throw ParameterError("bpdn_solve: tolerance must be positive");
  if (!(params.step_ratio > 0.0)) throw ParameterError("bpdn_solve: step_ratio must be positive");
  const std::size_t n = op.cols(), p = op.rows();
  detail::require_same_size(b.size(), p, "bpdn_solve rhs");

  BpdnResult result;
  result.x.assign(n, 0.0);
  const double b_norm = detail::norm2(b);
  if (b_norm <= eta) {
    // zero is feasible and has the least possible l1 norm
    result.converged = true;
    result.residual_norm = b_norm;
    return result;
  }
  result.operator_norm = operator_norm_estimate(op);
  if (result.operator_norm == 0.0) throw ParameterError("bpdn_solve: operator is zero");
  const double tau = 0.99 * params.step_ratio / result.operator_norm;
  const double sigma = 0.99 / (params.step_ratio * result.operator_norm);

  std::vector<double>& z = result.x;
  std::vector<double> z_prev(n), y(p, 0.0), y_prev(p), aty(n, 0.0), aty_prev(n), az(p, 0.0), az_prev(p),
      zbar(n), azbar(p), dual_step(p);
  const double scale = std::max(1.0, b_norm);

  for (std::size_t it = 1; it <= params.max_iterations; ++it) {
    z_prev = z;
    y_prev = y;
    aty_prev = aty;
    az_prev = az;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = z[i] - tau * aty[i];
      z[i] = v > tau ? v - tau : (v < -tau ? v + tau : 0.0);
    }
    op.apply(z, az);
    for (std::size_t i = 0; i < p; ++i) {
      azbar[i] = 2.0 * az[i] - az_prev[i];
      dual_step[i] = y[i] + sigma * azbar[i] - sigma * b[i];
    }
    // prox of the conjugate of the indicator of the eta-ball around b
    const double dn = detail::norm2(dual_step);
    const double shrink = dn > sigma * eta ? 1.0 - sigma * eta / dn : 0.0;
    for (std::size_t i = 0; i < p; ++i) y[i] = shrink * dual_step[i];
    op.apply_adjoint(y, aty);
    result.iterations = it;

    if (it % params.check_every == 0 || it == params.max_iterations) {
      double pr = 0.0, dr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = (z_prev[i] - z[i]) / tau - (aty_prev[i] - aty[i]);
        pr += r * r;
      }
      for (std::size_t i = 0; i < p; ++i) {
        const double r = (y_prev[i] - y[i]) / sigma - (az_prev[i] - az[i]);
        dr += r * r;
      }
      result.primal_residual = std::sqrt(pr);
      result.dual_residual = std::sqrt(dr);
      double feas = 0.0;
      for (std::size_t i = 0; i < p; ++i) feas += (az[i] - b[i]) * (az[i] - b[i]);
      feas = std::sqrt(feas);
      const double dual_scale = std::max(1.0, detail::norm2(aty));
      if (result.primal_residual <= params.tolerance * dual_scale &&
          result.dual_residual <= params.tolerance * scale && feas <= eta + params.tolerance * scale) {
        result.converged = true;
        break;
      }
    }
  }
  std::vector<double> final_az(p);
  op.apply(z, final_az);
  double feas = 0.0;
  for (std::size_t i = 0; i < p; ++i) feas += (final_az[i] - b[i]) * (final_az[i] - b[i]);
  result.residual_norm = std::sqrt(feas);
  result.objective = detail::norm1(z);
  return result;
}

struct SparseSignal {
  std::size_t n = 0;
  std::vector<std::size_t> support;
  std::vector<double> values;

  std::vector<double> dense() const {
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) x[support[i]] = values[i];
    return x;
  }
};

/// Random k-sparse unit vector, shrunk by the largest c <= 1 with ||Phi(c x)||_inf <= mu.
inline SparseSignal generate_sparse_signal(std::size_t n, std::size_t k, std::uint64_t seed,
                                           const StructuredEnsemble& ensemble, double mu = 8.0 / 9.0) {
  if (k > n) throw ParameterError("generate_sparse_signal: k exceeds n");
  detail::require_same_size(ensemble.n(), n, "generate_sparse_signal");
  Rng rng(seed);
  SparseSignal s;
  s.n = n;
  s.support = random_subset(rng, n, k);
  s.values = gaussian_vector(rng, k);
  const double nrm = detail::norm2(s.values);
  if (nrm > 0.0) {
    for (auto& v : s.values) v /= nrm;
  }
  const double peak = detail::norm_inf(ensemble.apply(s.dense()));
  if (peak > mu) {
    // Phi is linear, so the largest admissible factor is mu / peak; step down
    // past any rounding until the constraint holds in floating point.
    double c = mu / peak;
    const auto base = s.values;
    for (;;) {
      for (std::size_t i = 0; i < k; ++i) s.values[i] = c * base[i];
      if (detail::norm_inf(ensemble.apply(s.dense())) <= mu) break;
      c = std::nextafter(c, 0.0);
    }
  }
  return s;
}

/// Analytic eta for the condensed program (the bound of condense::eta_bound).
inline double choose_eta(const CondenserFlavor& flavor, std::size_t lambda, double delta) {
  return eta_bound(flavor, lambda, delta);
}

/// Realized ||V^(Phi x - q)||_2 for a known signal (oracle mode, tests and experiments only).
inline double oracle_eta(const StructuredEnsemble& ensemble, const Condenser& hat, std::span<const double> x,
                         std::span<const double> q) {
  auto y = ensemble.apply(x);
  detail::require_same_size(q.size(), y.size(), "oracle_eta");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= q[i];
  return detail::norm2(hat.condense(y));
}

struct RecoveryProblem {
  const StructuredEnsemble* ensemble = nullptr;
  Condenser condenser;  // hat scaling
  QuantizedCode code;
  double eta = 0.0;
  BpdnParams solver{};
};

struct RecoveryResult {
  std::vector<double> x_hat;
  BpdnResult solve;
};

/// Decodes x^ from q: A = V^ Phi, b = V^ q.
inline RecoveryResult reconstruct(const RecoveryProblem& rp) {
  if (rp.ensemble == nullptr) throw ParameterError("reconstruct: no ensemble");
  if (rp.condenser.scaling() != Scaling::hat) throw ParameterError("reconstruct: condenser must use the hat scaling");
  const CondensedOperator op(*rp.ensemble, rp.condenser);
  const auto b = rp.condenser.condense(rp.code.q);
  RecoveryResult out;
  out.solve = bpdn_solve(op, b, rp.eta, rp.solver);
  out.x_hat = out.solve.x;
  return out;
}

}  // namespace nsq
