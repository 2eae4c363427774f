#pragma once

// Noise-shaping quantizers. Every scheme returns (q, u) with y - q = H u,
// where H = I - H~ is lower triangular Toeplitz (block diagonal for the
// distributed beta scheme) and u is the quantizer state.

#include <nsq/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nsq {

/// 2L symmetric levels a*delta, a odd, |a| <= 2L-1.
struct Alphabet {
  int L = 1;
  double delta = 1.0;

  Alphabet() = default;
  Alphabet(int levels_half, double spacing) : L(levels_half), delta(spacing) {
    if (L < 1) throw ParameterError("Alphabet: L must be >= 1");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("Alphabet: delta must be positive");
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(2 * L); }

  double level(int odd_multiple) const noexcept { return static_cast<double>(odd_multiple) * delta; }

  std::vector<double> levels() const {
    std::vector<double> out;
    out.reserve(size());
    for (int a = -2 * L + 1; a <= 2 * L - 1; a += 2) out.push_back(level(a));
    return out;
  }

  /// Nearest level; an exact midpoint goes to the larger level.
  double nearest(double w) const noexcept {
    const double t = w / delta;
    double odd = 2.0 * std::floor(t / 2.0) + 1.0;
    const double top = static_cast<double>(2 * L - 1);
    odd = std::clamp(odd, -top, top);
    return level(static_cast<int>(odd));
  }

  bool contains(double q) const noexcept {
    const double r = std::round(q / delta);
    if (!(std::abs(r) <= static_cast<double>(2 * L - 1))) return false;
    const auto a = static_cast<int>(r);
    return (a % 2 != 0) && level(a) == q;
  }
};

struct Msq {};

struct SigmaDelta {
  int order = 1;
};

/// Distributed noise shaping; the recursion restarts every `block` samples.
struct Beta {
  double beta = 10.0 / 9.0;
  std::size_t block = 1;
};

using Scheme = std::variant<Msq, SigmaDelta, Beta>;

inline std::string describe(const Scheme& s) {
  if (std::holds_alternative<Msq>(s)) return "msq";
  if (const auto* sd = std::get_if<SigmaDelta>(&s)) return "sd:r=" + std::to_string(sd->order);
  const auto& b = std::get<Beta>(s);
  char buf[64];
  std::snprintf(buf, sizeof buf, "beta:%.17g", b.beta);
  return buf;
}

namespace detail {

inline double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

}  // namespace detail

/// Feedback taps of H~ = I - H: w_s = y_s + sum_j taps[j-1] * u_{s-j}.
inline std::vector<double> feedback_taps(const Scheme& s) {
  if (std::holds_alternative<Msq>(s)) return {};
  if (const auto* sd = std::get_if<SigmaDelta>(&s)) {
    if (sd->order < 1) throw ParameterError("sigma-delta order must be >= 1");
    std::vector<double> taps(static_cast<std::size_t>(sd->order));
    for (int j = 1; j <= sd->order; ++j) {
      // D^r has (-1)^j binom(r, j) on its j-th subdiagonal.
      taps[static_cast<std::size_t>(j - 1)] = ((j % 2) ? 1.0 : -1.0) * detail::binomial(sd->order, j);
    }
    return taps;
  }
  const auto& b = std::get<Beta>(s);
  if (!(b.beta > 1.0)) throw ParameterError("beta must exceed 1");
  if (b.block < 1) throw ParameterError("beta block length must be >= 1");
  return {b.beta};
}

/// Block length of H, 0 meaning the whole signal.
inline std::size_t block_length(const Scheme& s) {
  if (const auto* b = std::get_if<Beta>(&s)) return b->block;
  return 0;
}

/// ||H~||_{inf->inf}: 0 for MSQ, 2^r - 1 for sigma-delta, beta for the beta scheme.
inline double feedback_norm(const Scheme& s) {
  double total = 0.0;
  for (double t : feedback_taps(s)) total += std::abs(t);
  return total;
}

struct NoiseShaper {
  Scheme scheme = Msq{};
  Alphabet alphabet{};
};

struct QuantizedCode {
  std::vector<double> q;
  std::vector<double> u;
  double mu = 0.0;          // ||y||_inf of the quantized input
  double max_state = 0.0;   // achieved ||u||_inf
  double margin = 0.0;      // stability_margin at mu
  bool certified = true;    // margin >= 0
  std::string warning;
};

/// 2L - ||H~||_{inf->inf} - mu/delta; nonnegative means the greedy recursion keeps ||u||_inf <= delta.
inline double stability_margin(const Scheme& s, const Alphabet& a, double mu) {
  return 2.0 * a.L - feedback_norm(s) - mu / a.delta;
}

inline std::vector<double> quantize_msq(std::span<const double> y, const Alphabet& a) {
  std::vector<double> q(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) q[i] = a.nearest(y[i]);
  return q;
}

/// Greedy noise-shaping recursion: w_s = y_s + sum_j H~_{s,s-j} u_{s-j},
/// q_s = nearest level to w_s, u_s = w_s - q_s.
inline QuantizedCode quantize_noise_shaping(std::span<const double> y, const NoiseShaper& shaper) {
  const auto taps = feedback_taps(shaper.scheme);
  const std::size_t block = block_length(shaper.scheme);
  if (block > 0 && y.size() % block != 0) {
    throw DimensionError("beta quantizer: length " + std::to_string(y.size()) + " is not a multiple of lambda = " +
                         std::to_string(block));
  }
  QuantizedCode code;
  code.q.resize(y.size());
  code.u.resize(y.size());
  for (double v : y) code.mu = std::max(code.mu, std::abs(v));
  code.margin = stability_margin(shaper.scheme, shaper.alphabet, code.mu);
  code.certified = code.margin >= 0.0;
  if (!code.certified) {
    code.warning = "stability precondition violated (margin " + std::to_string(code.margin) + ")";
  }
  for (std::size_t s = 0; s < y.size(); ++s) {
    const std::size_t start = block > 0 ? (s / block) * block : 0;
    double w = y[s];
    for (std::size_t j = 1; j <= taps.size() && s >= start + j; ++j) w += taps[j - 1] * code.u[s - j];
    code.q[s] = shaper.alphabet.nearest(w);
    code.u[s] = w - code.q[s];
    code.max_state = std::max(code.max_state, std::abs(code.u[s]));
  }
  return code;
}

inline QuantizedCode quantize_sigma_delta(std::span<const double> y, int order, const Alphabet& a) {
  if (order < 1) throw ParameterError("sigma-delta order must be >= 1");
  return quantize_noise_shaping(y, NoiseShaper{SigmaDelta{order}, a});
}

inline QuantizedCode quantize_beta(std::span<const double> y, double beta, std::size_t lambda, const Alphabet& a) {
  if (lambda < 1) throw ParameterError("beta block length must be >= 1");
  return quantize_noise_shaping(y, NoiseShaper{Beta{beta, lambda}, a});
}

/// H u through the banded recursion (no materialized matrix).
inline std::vector<double> apply_noise_transfer(const Scheme& s, std::span<const double> u) {
  const auto taps = feedback_taps(s);
  const std::size_t block = block_length(s);
  if (block > 0 && u.size() % block != 0) throw DimensionError("apply_noise_transfer: length not a multiple of lambda");
  std::vector<double> out(u.begin(), u.end());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const std::size_t start = block > 0 ? (i / block) * block : 0;
    for (std::size_t j = 1; j <= taps.size() && i >= start + j; ++j) out[i] -= taps[j - 1] * u[i - j];
  }
  return out;
}

/// Order-dependent state bound of the coarse stable sigma-delta family,
/// C delta (ceil(pi^2 / acosh(2L - mu/delta)^2) (e/pi) r)^r. Reporting only;
/// C is not calibrated and defaults to 1.
inline double coarse_sd_state_bound(int order, int L, double delta, double mu, double constant = 1.0) {
  if (order < 1) throw ParameterError("coarse_sd_state_bound: order must be >= 1");
  const double arg = 2.0 * L - mu / delta;
  if (!(arg > 1.0)) throw DomainError("coarse_sd_state_bound: need 2L - mu/delta > 1");
  const double ach = std::acosh(arg);
  const double lead = std::ceil(std::numbers::pi * std::numbers::pi / (ach * ach));
  return constant * delta * std::pow(lead * (std::numbers::e / std::numbers::pi) * order, order);
}

}  // namespace nsq
