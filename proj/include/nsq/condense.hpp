#pragma once

// Condensation V = I_p (x) v, its two normalizations, the pseudo-metric on
// codes, and the analytic bounds on the condensed quantization error.

#include <nsq/error.hpp>
#include <nsq/quantize.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nsq {

/// Coefficients of (1 + z + ... + z^{lambda_tilde - 1})^r, length r*lambda_tilde - r + 1.
inline std::vector<double> sd_condensation_vector(int order, std::size_t lambda_tilde) {
  if (order < 1) throw ParameterError("sd_condensation_vector: order must be >= 1");
  if (lambda_tilde < 1) throw ParameterError("sd_condensation_vector: lambda_tilde must be >= 1");
  std::vector<double> v{1.0};
  for (int k = 0; k < order; ++k) {
    std::vector<double> next(v.size() + lambda_tilde - 1, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < lambda_tilde; ++j) next[i + j] += v[i];
    }
    v = std::move(next);
  }
  return v;
}

/// (beta^-1, ..., beta^-lambda).
inline std::vector<double> beta_condensation_vector(double beta, std::size_t lambda) {
  if (!(beta > 1.0)) throw ParameterError("beta_condensation_vector: beta must exceed 1");
  if (lambda < 1) throw ParameterError("beta_condensation_vector: lambda must be >= 1");
  std::vector<double> v(lambda);
  double power = 1.0;
  for (auto& e : v) {
    power /= beta;
    e = power;
  }
  return v;
}

/// lambda_tilde with lambda = r*lambda_tilde - r + 1, if it exists.
inline std::optional<std::size_t> lambda_tilde_for(int order, std::size_t lambda) {
  if (order < 1 || lambda < 1) return std::nullopt;
  const std::size_t r = static_cast<std::size_t>(order);
  if ((lambda + r - 1) % r != 0) return std::nullopt;
  return (lambda + r - 1) / r;
}

enum class Scaling { raw, tilde, hat };

struct SigmaDeltaFlavor {
  int order = 1;
  std::size_t lambda_tilde = 1;
};

struct BetaFlavor {
  double beta = 10.0 / 9.0;
};

using CondenserFlavor = std::variant<SigmaDeltaFlavor, BetaFlavor>;

class Condenser {
 public:
  Condenser(std::vector<double> v, std::size_t p, Scaling scaling, CondenserFlavor flavor)
      : v_(std::move(v)), p_(p), scaling_(scaling), flavor_(flavor) {
    if (v_.empty()) throw ParameterError("Condenser: empty condensation vector");
    if (p_ < 1) throw ParameterError("Condenser: p must be >= 1");
    norm2_ = std::sqrt(std::inner_product(v_.begin(), v_.end(), v_.begin(), 0.0));
    if (!(norm2_ > 0.0)) throw ParameterError("Condenser: condensation vector is zero");
  }

  static Condenser sigma_delta(int order, std::size_t lambda_tilde, std::size_t p, Scaling scaling) {
    return {sd_condensation_vector(order, lambda_tilde), p, scaling, SigmaDeltaFlavor{order, lambda_tilde}};
  }

  /// Sigma-delta condenser of total block length lambda; rejects lambda with no integral lambda_tilde.
  static Condenser sigma_delta_for_lambda(int order, std::size_t lambda, std::size_t p, Scaling scaling) {
    const auto lt = lambda_tilde_for(order, lambda);
    if (!lt) {
      throw ParameterError("sigma-delta condenser: lambda = " + std::to_string(lambda) +
                           " is not of the form r*lambda_tilde - r + 1 for r = " + std::to_string(order));
    }
    return sigma_delta(order, *lt, p, scaling);
  }

  static Condenser beta(double beta, std::size_t lambda, std::size_t p, Scaling scaling) {
    return {beta_condensation_vector(beta, lambda), p, scaling, BetaFlavor{beta}};
  }

  const std::vector<double>& v() const noexcept { return v_; }
  std::size_t p() const noexcept { return p_; }
  std::size_t lambda() const noexcept { return v_.size(); }
  std::size_t m() const noexcept { return p_ * v_.size(); }
  Scaling scaling() const noexcept { return scaling_; }
  const CondenserFlavor& flavor() const noexcept { return flavor_; }
  double v_norm2() const noexcept { return norm2_; }

  /// ||v||_1 / ||v||_2.
  double gamma() const {
    double l1 = 0.0;
    for (double e : v_) l1 += std::abs(e);
    return l1 / norm2_;
  }

  /// Multiplier applied on top of I_p (x) v.
  double scale() const noexcept {
    const double base = 1.0 / (norm2_ * std::sqrt(static_cast<double>(p_)));
    switch (scaling_) {
      case Scaling::raw: return 1.0;
      case Scaling::tilde: return 9.0 / 8.0 * base;
      case Scaling::hat: return base;
    }
    return 1.0;
  }

  Condenser with_scaling(Scaling s) const {
    Condenser c = *this;
    c.scaling_ = s;
    return c;
  }

  void condense(std::span<const double> q, std::span<double> out) const {
    detail::require_same_size(q.size(), m(), "condense input");
    detail::require_same_size(out.size(), p_, "condense output");
    const std::size_t lambda = v_.size();
    const double s = scale();
    for (std::size_t l = 0; l < p_; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < lambda; ++j) acc += v_[j] * q[l * lambda + j];
      out[l] = s * acc;
    }
  }

  std::vector<double> condense(std::span<const double> q) const {
    std::vector<double> out(p_);
    condense(q, out);
    return out;
  }

  /// Transpose of condense: block l of the output is scale * y_l * v.
  void expand(std::span<const double> y, std::span<double> out) const {
    detail::require_same_size(y.size(), p_, "condense adjoint input");
    detail::require_same_size(out.size(), m(), "condense adjoint output");
    const std::size_t lambda = v_.size();
    const double s = scale();
    for (std::size_t l = 0; l < p_; ++l) {
      for (std::size_t j = 0; j < lambda; ++j) out[l * lambda + j] = s * y[l] * v_[j];
    }
  }

 private:
  std::vector<double> v_;
  std::size_t p_;
  Scaling scaling_;
  CondenserFlavor flavor_;
  double norm2_ = 0.0;
};

inline std::vector<double> condense(const Condenser& c, std::span<const double> q) { return c.condense(q); }

/// ||V (q - q2)||_2 under the condenser's scaling (the tilde scaling for embeddings).
inline double pseudo_metric(const Condenser& c, std::span<const double> q, std::span<const double> q2) {
  detail::require_same_size(q.size(), c.m(), "pseudo_metric");
  detail::require_same_size(q2.size(), c.m(), "pseudo_metric");
  std::vector<double> diff(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) diff[i] = q[i] - q2[i];
  const auto cd = c.condense(diff);
  double acc = 0.0;
  for (double e : cd) acc += e * e;
  return std::sqrt(acc);
}

inline constexpr std::size_t kMaxMaterializedLength = std::size_t{1} << 15;

/// Row l1 norms of (raw) V D^r, materialized column by column. Oracle use only.
inline std::vector<double> vdr_row_l1_norms(const Condenser& c, std::size_t m) {
  const auto* sd = std::get_if<SigmaDeltaFlavor>(&c.flavor());
  if (sd == nullptr) throw ParameterError("vdr_row_l1_norms: needs a sigma-delta condenser");
  if (m > kMaxMaterializedLength) throw BudgetError("vdr_row_l1_norms: m exceeds 2^15");
  detail::require_same_size(m, c.m(), "vdr_row_l1_norms");
  const Condenser raw = c.with_scaling(Scaling::raw);
  const Scheme scheme = SigmaDelta{sd->order};
  std::vector<double> norms(c.p(), 0.0);
  std::vector<double> unit(m, 0.0);
  for (std::size_t col = 0; col < m; ++col) {
    unit[col] = 1.0;
    const auto column = raw.condense(apply_noise_transfer(scheme, unit));
    unit[col] = 0.0;
    for (std::size_t l = 0; l < c.p(); ++l) norms[l] += std::abs(column[l]);
  }
  return norms;
}

/// Analytic bound on the condensed quantization error for ||u||_inf <= delta:
/// (8r)^{r+1} lambda^{-r+1/2} delta for sigma-delta, delta beta^{-lambda+1} for beta.
inline double eta_bound(const SigmaDeltaFlavor& f, std::size_t lambda, double delta) {
  if (lambda < 1) throw ParameterError("eta_bound: lambda must be >= 1");
  const double r = f.order;
  return std::pow(8.0 * r, r + 1.0) * std::pow(static_cast<double>(lambda), -r + 0.5) * delta;
}

inline double eta_bound(const BetaFlavor& f, std::size_t lambda, double delta) {
  if (lambda < 1) throw ParameterError("eta_bound: lambda must be >= 1");
  return delta * std::pow(f.beta, -static_cast<double>(lambda) + 1.0);
}

inline double eta_bound(const CondenserFlavor& f, std::size_t lambda, double delta) {
  return std::visit([&](const auto& flavor) { return eta_bound(flavor, lambda, delta); }, f);
}

/// Quantizer matching a condenser flavor over blocks of length lambda.
inline Scheme scheme_for(const CondenserFlavor& f, std::size_t lambda) {
  if (const auto* sd = std::get_if<SigmaDeltaFlavor>(&f)) return SigmaDelta{sd->order};
  return Beta{std::get<BetaFlavor>(f).beta, lambda};
}

}  // namespace nsq
