#pragma once

// Structured random measurement operators: bounded orthogonal ensembles
// (Hadamard, real DFT) and partial circulant ensembles, with row signs.
// Every apply / adjoint costs O(n log n).

#include <nsq/error.hpp>
#include <nsq/random.hpp>

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nsq {

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && std::has_single_bit(n); }

/// In-place unnormalized fast Walsh-Hadamard transform, x <- Hx with H entries +-1.
inline void fwht_inplace(std::span<double> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) {
    throw DimensionError("fwht: length " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = x[j];
        const double b = x[j + h];
        x[j] = a + b;
        x[j + h] = a - b;
      }
    }
  }
}

inline std::vector<double> fwht(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  fwht_inplace(out);
  return out;
}

/// Radix-2 complex FFT of a fixed power-of-two size. Immutable once built,
/// so one plan can be shared by concurrent callers.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (!is_power_of_two(n)) {
      throw DimensionError("fft: length " + std::to_string(n) + " is not a power of two");
    }
    const int bits = std::countr_zero(n);
    reversed_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      reversed_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const noexcept { return n_; }

  /// Unnormalized transform. forward: sum_j x_j e^{-2 pi i jk/n}; inverse uses e^{+...}.
  void transform(std::span<std::complex<double>> data, bool inverse) const {
    detail::require_same_size(data.size(), n_, "fft");
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(data[i], data[reversed_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len >> 1;
      const std::size_t stride = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < half; ++j) {
          std::complex<double> w = twiddles_[j * stride];
          if (inverse) w = std::conj(w);
          const std::complex<double> t = w * data[i + j + half];
          data[i + j + half] = data[i + j] - t;
          data[i + j] += t;
        }
      }
    }
  }

  std::vector<std::complex<double>> forward_real(std::span<const double> x) const {
    detail::require_same_size(x.size(), n_, "fft");
    std::vector<std::complex<double>> out(x.begin(), x.end());
    transform(out, false);
    return out;
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> reversed_;
  std::vector<std::complex<double>> twiddles_;
};

/// Circular convolution (z * x)_i = sum_j z_{(i-j) mod n} x_j, computed by FFT.
inline std::vector<double> circular_convolve(std::span<const double> z, std::span<const double> x) {
  if (z.size() != x.size()) {
    throw DimensionError("circular_convolve: lengths " + std::to_string(z.size()) + " and " +
                         std::to_string(x.size()) + " differ");
  }
  const std::size_t n = z.size();
  if (n == 0) return {};
  const FftPlan plan(n);
  auto zf = plan.forward_real(z);
  auto xf = plan.forward_real(x);
  for (std::size_t k = 0; k < n; ++k) xf[k] *= zf[k];
  plan.transform(xf, true);
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xf[i].real() * scale;
  return out;
}

/// A +-1 vector regenerated bit-identically from its seed.
struct SignVector {
  std::vector<std::int8_t> entries;
  std::uint64_t seed = 0;

  static SignVector random(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    SignVector s;
    s.seed = seed;
    s.entries.resize(n);
    for (auto& e : s.entries) e = static_cast<std::int8_t>(random_sign(rng));
    return s;
  }

  static SignVector ones(std::size_t n) {
    SignVector s;
    s.entries.assign(n, 1);
    return s;
  }

  std::size_t size() const noexcept { return entries.size(); }
  double operator[](std::size_t i) const noexcept { return static_cast<double>(entries[i]); }
  bool operator==(const SignVector&) const = default;
};

/// Entrywise x_i * d_i (the diagonal sign matrix D applied to x).
inline std::vector<double> apply_column_signs(const SignVector& d, std::span<const double> x) {
  detail::require_same_size(x.size(), d.size(), "apply_column_signs");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = d.entries[i] < 0 ? -x[i] : x[i];
  return out;
}

enum class EnsembleKind { boe_hadamard, boe_dft_real, pce };

inline std::string_view to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::boe_hadamard: return "hadamard";
    case EnsembleKind::boe_dft_real: return "dft";
    case EnsembleKind::pce: return "pce";
  }
  return "?";
}

inline EnsembleKind parse_ensemble_kind(std::string_view s) {
  if (s == "hadamard" || s == "boe-hadamard") return EnsembleKind::boe_hadamard;
  if (s == "dft" || s == "boe-dft" || s == "boe-dft-real") return EnsembleKind::boe_dft_real;
  if (s == "pce" || s == "circulant") return EnsembleKind::pce;
  throw ConstructionError("unknown ensemble kind '" + std::string(s) + "'");
}

/// Sampled measurement operator Phi (m x n). Row j of Phi is
/// row_signs[j] * (row row_index[j] of the base), where the base is the
/// unnormalized Hadamard matrix, the real DFT basis scaled to max-entry 1,
/// or the circulant matrix generated by a random sign vector.
///
/// The real DFT base orders its rows as: 0 = constant 1/sqrt(2),
/// 2k-1 = cos(2 pi k j/n), 2k = sin(2 pi k j/n) for 0 < k < n/2, and
/// n-1 = (-1)^j/sqrt(2). It satisfies U U^T = (n/2) I.
class StructuredEnsemble {
 public:
  EnsembleKind kind() const noexcept { return kind_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return row_index_.size(); }
  const std::vector<std::size_t>& row_index() const noexcept { return row_index_; }
  const SignVector& row_signs() const noexcept { return row_signs_; }
  /// Circulant generator sigma (empty unless kind() == pce).
  const SignVector& generator() const noexcept { return generator_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Squared base-row norm divided by n: 1 for Hadamard and circulant, 1/2 for real DFT.
  double row_energy() const noexcept { return kind_ == EnsembleKind::boe_dft_real ? 0.5 : 1.0; }

  void apply(std::span<const double> x, std::span<double> out) const {
    detail::require_same_size(x.size(), n_, "ensemble apply input");
    detail::require_same_size(out.size(), m(), "ensemble apply output");
    const std::vector<double> full = base_apply(x);
    for (std::size_t j = 0; j < m(); ++j) out[j] = row_signs_[j] * full[row_index_[j]];
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(m());
    apply(x, out);
    return out;
  }

  void apply_adjoint(std::span<const double> y, std::span<double> out) const {
    detail::require_same_size(y.size(), m(), "ensemble adjoint input");
    detail::require_same_size(out.size(), n_, "ensemble adjoint output");
    std::vector<double> coeff(n_, 0.0);
    for (std::size_t j = 0; j < m(); ++j) coeff[row_index_[j]] += row_signs_[j] * y[j];
    base_apply_transpose(coeff, out);
  }

  std::vector<double> apply_adjoint(std::span<const double> y) const {
    std::vector<double> out(n_);
    apply_adjoint(y, out);
    return out;
  }

  /// Row i of the base matrix, materialized entry by entry from its definition.
  std::vector<double> base_row(std::size_t i) const {
    std::vector<double> row(n_);
    switch (kind_) {
      case EnsembleKind::boe_hadamard:
        for (std::size_t j = 0; j < n_; ++j) row[j] = (std::popcount(i & j) & 1) ? -1.0 : 1.0;
        break;
      case EnsembleKind::boe_dft_real: {
        const double nd = static_cast<double>(n_);
        for (std::size_t j = 0; j < n_; ++j) {
          const double jd = static_cast<double>(j);
          if (i == 0) {
            row[j] = std::numbers::sqrt2 / 2.0;
          } else if (i == n_ - 1) {
            row[j] = ((j & 1) ? -1.0 : 1.0) * std::numbers::sqrt2 / 2.0;
          } else {
            const double k = static_cast<double>((i + 1) / 2);
            const double angle = 2.0 * std::numbers::pi * k * jd / nd;
            row[j] = (i & 1) ? std::cos(angle) : std::sin(angle);
          }
        }
        break;
      }
      case EnsembleKind::pce:
        for (std::size_t j = 0; j < n_; ++j) row[j] = generator_[(i + n_ - j) % n_];
        break;
    }
    return row;
  }

  /// Row j of Phi.
  std::vector<double> row(std::size_t j) const {
    auto r = base_row(row_index_.at(j));
    for (auto& e : r) e *= row_signs_[j];
    return r;
  }

  /// Same rows and base, different row signs. Used by sign-enumeration checks.
  StructuredEnsemble with_row_signs(SignVector signs) const {
    detail::require_same_size(signs.size(), m(), "with_row_signs");
    StructuredEnsemble copy = *this;
    copy.row_signs_ = std::move(signs);
    return copy;
  }

  friend StructuredEnsemble make_boe(EnsembleKind kind, std::size_t n, std::vector<std::size_t> rows,
                                     SignVector row_signs, std::uint64_t seed);
  friend StructuredEnsemble make_pce(SignVector generator, std::vector<std::size_t> omega,
                                     SignVector row_signs, std::uint64_t seed);

 private:
  StructuredEnsemble() = default;

  std::vector<double> base_apply(std::span<const double> x) const {
    std::vector<double> full(x.begin(), x.end());
    switch (kind_) {
      case EnsembleKind::boe_hadamard:
        fwht_inplace(full);
        break;
      case EnsembleKind::boe_dft_real: {
        auto spec = plan_->forward_real(x);
        const double r2 = std::numbers::sqrt2 / 2.0;
        full[0] = spec[0].real() * r2;
        if (n_ > 1) full[n_ - 1] = spec[n_ / 2].real() * r2;
        for (std::size_t k = 1; k < n_ / 2; ++k) {
          full[2 * k - 1] = spec[k].real();
          full[2 * k] = -spec[k].imag();
        }
        break;
      }
      case EnsembleKind::pce: {
        auto spec = plan_->forward_real(x);
        for (std::size_t k = 0; k < n_; ++k) spec[k] *= generator_spectrum_[k];
        plan_->transform(spec, true);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i) full[i] = spec[i].real() * scale;
        break;
      }
    }
    return full;
  }

  void base_apply_transpose(std::vector<double>& coeff, std::span<double> out) const {
    switch (kind_) {
      case EnsembleKind::boe_hadamard:
        fwht_inplace(coeff);
        std::copy(coeff.begin(), coeff.end(), out.begin());
        break;
      case EnsembleKind::boe_dft_real: {
        std::vector<std::complex<double>> spec(n_, {0.0, 0.0});
        const double r2 = std::numbers::sqrt2 / 2.0;
        spec[0] = coeff[0] * r2;
        if (n_ > 1) spec[n_ / 2] += coeff[n_ - 1] * r2;
        for (std::size_t k = 1; k < n_ / 2; ++k) spec[k] = {coeff[2 * k - 1], -coeff[2 * k]};
        plan_->transform(spec, true);
        for (std::size_t j = 0; j < n_; ++j) out[j] = spec[j].real();
        break;
      }
      case EnsembleKind::pce: {
        auto spec = plan_->forward_real(coeff);
        for (std::size_t k = 0; k < n_; ++k) spec[k] *= std::conj(generator_spectrum_[k]);
        plan_->transform(spec, true);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t j = 0; j < n_; ++j) out[j] = spec[j].real() * scale;
        break;
      }
    }
  }

  EnsembleKind kind_ = EnsembleKind::boe_hadamard;
  std::size_t n_ = 0;
  std::vector<std::size_t> row_index_;
  SignVector row_signs_;
  SignVector generator_;
  std::uint64_t seed_ = 0;
  std::shared_ptr<const FftPlan> plan_;
  std::vector<std::complex<double>> generator_spectrum_;
};

/// Bounded orthogonal ensemble with explicit rows (duplicates allowed).
inline StructuredEnsemble make_boe(EnsembleKind kind, std::size_t n, std::vector<std::size_t> rows,
                                   SignVector row_signs, std::uint64_t seed = 0) {
  if (kind == EnsembleKind::pce) throw ConstructionError("make_boe: circulant kind requested");
  if (!is_power_of_two(n)) {
    throw ConstructionError("make_boe: n = " + std::to_string(n) + " is not a power of two");
  }
  if (kind == EnsembleKind::boe_dft_real && n < 2) throw ConstructionError("make_boe: real DFT base needs n >= 2");
  if (rows.empty()) throw ConstructionError("make_boe: m must be at least 1");
  if (row_signs.size() != rows.size()) throw ConstructionError("make_boe: row sign count differs from m");
  for (auto r : rows) {
    if (r >= n) throw ConstructionError("make_boe: row index out of range");
  }
  StructuredEnsemble e;
  e.kind_ = kind;
  e.n_ = n;
  e.row_index_ = std::move(rows);
  e.row_signs_ = std::move(row_signs);
  e.seed_ = seed;
  if (kind == EnsembleKind::boe_dft_real) e.plan_ = std::make_shared<const FftPlan>(n);
  return e;
}

/// Partial circulant ensemble with explicit generator sigma and index set omega.
inline StructuredEnsemble make_pce(SignVector generator, std::vector<std::size_t> omega, SignVector row_signs,
                                   std::uint64_t seed = 0) {
  const std::size_t n = generator.size();
  if (!is_power_of_two(n)) {
    throw ConstructionError("make_pce: n = " + std::to_string(n) + " is not a power of two");
  }
  if (omega.empty() || omega.size() > n) throw ConstructionError("make_pce: need 1 <= m <= n");
  if (row_signs.size() != omega.size()) throw ConstructionError("make_pce: row sign count differs from m");
  std::vector<bool> seen(n, false);
  for (auto r : omega) {
    if (r >= n) throw ConstructionError("make_pce: index out of range");
    if (seen[r]) throw ConstructionError("make_pce: index set has duplicates");
    seen[r] = true;
  }
  StructuredEnsemble e;
  e.kind_ = EnsembleKind::pce;
  e.n_ = n;
  e.row_index_ = std::move(omega);
  e.row_signs_ = std::move(row_signs);
  e.generator_ = std::move(generator);
  e.seed_ = seed;
  e.plan_ = std::make_shared<const FftPlan>(n);
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = e.generator_[i];
  e.generator_spectrum_ = e.plan_->forward_real(sigma);
  return e;
}

/// Draws Phi: BOE rows uniformly with replacement, or a uniform m-subset of
/// circulant rows with a uniform sign generator; row signs independent.
inline StructuredEnsemble sample_ensemble(EnsembleKind kind, std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw ConstructionError("sample_ensemble: m must be at least 1");
  if (!is_power_of_two(n)) {
    throw ConstructionError("sample_ensemble: n = " + std::to_string(n) + " is not a power of two");
  }
  Rng rng(derive_seed(seed, 0));
  SignVector row_signs = SignVector::random(m, derive_seed(seed, 1));
  if (kind == EnsembleKind::pce) {
    if (m > n) throw ConstructionError("sample_ensemble: circulant ensemble needs m <= n");
    SignVector sigma = SignVector::random(n, derive_seed(seed, 2));
    auto omega = random_subset(rng, n, m);
    return make_pce(std::move(sigma), std::move(omega), std::move(row_signs), seed);
  }
  std::vector<std::size_t> rows(m);
  for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, n));
  return make_boe(kind, n, std::move(rows), std::move(row_signs), seed);
}

}  // namespace nsq
