#pragma once

// Fast binary embeddings f(x) = Q((8/9) Phi D x) compared through the
// pseudo-metric ||V~(f(x) - f(x'))||_2, plus distortion reporting and the
// packed-bit code format.

#include <nsq/condense.hpp>
#include <nsq/error.hpp>
#include <nsq/quantize.hpp>
#include <nsq/random.hpp>
#include <nsq/recover.hpp>
#include <nsq/transforms.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace nsq {

enum class DomainMode { ell1_ball, ell2_ball };

struct EmbeddingPipeline {
  StructuredEnsemble ensemble;
  SignVector column_signs;
  NoiseShaper shaper;
  Condenser condenser;  // tilde scaling
  double input_scale = 8.0 / 9.0;
  DomainMode mode = DomainMode::ell1_ball;
};

struct PipelineOptions {
  Alphabet alphabet{};
  double input_scale = 8.0 / 9.0;
  DomainMode mode = DomainMode::ell1_ball;
  /// Distortion used to size the alphabet in ell2-ball mode, delta -> delta sqrt((1+alpha) m).
  double ell2_alpha = 0.5;
};

/// Builds a pipeline whose quantizer matches the condenser flavor.
inline EmbeddingPipeline make_pipeline(StructuredEnsemble ensemble, SignVector column_signs, Condenser condenser,
                                       const PipelineOptions& opts = {}) {
  if (condenser.m() != ensemble.m()) {
    throw DimensionError("make_pipeline: lambda * p = " + std::to_string(condenser.m()) + " but m = " +
                         std::to_string(ensemble.m()));
  }
  detail::require_same_size(column_signs.size(), ensemble.n(), "make_pipeline column signs");
  if (condenser.scaling() != Scaling::tilde) condenser = condenser.with_scaling(Scaling::tilde);
  Alphabet alphabet = opts.alphabet;
  if (opts.mode == DomainMode::ell2_ball) {
    if (!(opts.ell2_alpha > 0.0)) throw ParameterError("make_pipeline: ell2 mode needs alpha > 0");
    alphabet = Alphabet(alphabet.L, alphabet.delta * std::sqrt((1.0 + opts.ell2_alpha) * double(ensemble.m())));
  }
  const Scheme scheme = scheme_for(condenser.flavor(), condenser.lambda());
  return EmbeddingPipeline{std::move(ensemble), std::move(column_signs), NoiseShaper{scheme, alphabet},
                           std::move(condenser), opts.input_scale, opts.mode};
}

/// input_scale * Phi * D x, the vector handed to the quantizer.
inline std::vector<double> pre_quantization(const EmbeddingPipeline& pl, std::span<const double> x) {
  detail::require_same_size(x.size(), pl.ensemble.n(), "embed_point");
  auto y = pl.ensemble.apply(apply_column_signs(pl.column_signs, x));
  for (auto& e : y) e *= pl.input_scale;
  return y;
}

/// f(x) with the quantizer state. code.q is the embedding.
inline QuantizedCode embed_point(const EmbeddingPipeline& pl, std::span<const double> x) {
  auto code = quantize_noise_shaping(pre_quantization(pl, x), pl.shaper);
  if (pl.mode == DomainMode::ell1_ball && detail::norm1(x) > 1.0 + 1e-12) {
    if (!code.warning.empty()) code.warning += "; ";
    code.warning += "input outside the unit l1 ball";
  }
  return code;
}

inline double code_distance(const EmbeddingPipeline& pl, std::span<const double> c1, std::span<const double> c2) {
  return pseudo_metric(pl.condenser, c1, c2);
}

struct PairRecord {
  std::size_t i = 0, j = 0;
  double true_distance = 0.0;      // ||x_i - x_j||_2
  double embedded_distance = 0.0;  // d_V~(f(x_i), f(x_j))
  double linear_distance = 0.0;    // ||V~ (8/9) Phi D (x_i - x_j)||_2, the unquantized control
  double multiplicative = 0.0;     // |d_emb - d| / d (0 when d = 0)
  double additive = 0.0;           // max(0, |d_emb - d| - alpha d)
  double quantization = 0.0;       // |d_emb - d_lin|
};

struct DistortionReport {
  std::vector<PairRecord> pairs;
  double alpha = 0.0;        // supplied multiplicative tolerance
  double alpha_hat = 0.0;    // fitted slope of |d_emb - d| ~ alpha d + eta
  double eta_hat = 0.0;      // smallest floor making the sandwich hold at alpha_hat
  double ls_eta = 0.0;       // least-squares intercept
  double max_additive = 0.0;
  double median_additive = 0.0;
  double max_quantization = 0.0;
  double median_quantization = 0.0;
  double max_violation = 0.0;  // max(|d_emb - d| - alpha d - eta_ref), eta_ref supplied
  std::size_t warnings = 0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

/// min ||(a d + e) - r||^2 over a, e >= 0.
inline std::pair<double, double> nonnegative_line_fit(std::span<const double> d, std::span<const double> r) {
  const double n = static_cast<double>(d.size());
  double sd = 0, sr = 0, sdd = 0, sdr = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sd += d[i];
    sr += r[i];
    sdd += d[i] * d[i];
    sdr += d[i] * r[i];
  }
  auto cost = [&](double a, double e) {
    double c = 0;
    for (std::size_t i = 0; i < d.size(); ++i) c += (a * d[i] + e - r[i]) * (a * d[i] + e - r[i]);
    return c;
  };
  const double det = n * sdd - sd * sd;
  if (det > 1e-300) {
    const double a = (n * sdr - sd * sr) / det;
    const double e = (sr - a * sd) / n;
    if (a >= 0 && e >= 0) return {a, e};
  }
  // boundary candidates
  const std::pair<double, double> only_a{sdd > 0 ? std::max(0.0, sdr / sdd) : 0.0, 0.0};
  const std::pair<double, double> only_e{0.0, std::max(0.0, sr / n)};
  return cost(only_a.first, only_a.second) <= cost(only_e.first, only_e.second) ? only_a : only_e;
}

}  // namespace detail

/// Embeds every point and records all pairwise distances. `eta_ref` is the
/// additive allowance used for max_violation.
inline DistortionReport evaluate_embedding(std::span<const std::vector<double>> points, const EmbeddingPipeline& pl,
                                           double alpha, double eta_ref = 0.0) {
  if (points.size() < 2) throw ParameterError("evaluate_embedding: need at least two points");
  std::vector<std::vector<double>> codes, linear;
  DistortionReport rep;
  rep.alpha = alpha;
  rep.max_violation = -std::numeric_limits<double>::infinity();
  const Condenser& cond = pl.condenser;
  for (const auto& x : points) {
    auto code = embed_point(pl, x);
    if (!code.warning.empty()) ++rep.warnings;
    codes.push_back(std::move(code.q));
    linear.push_back(cond.condense(pre_quantization(pl, x)));
  }
  std::vector<double> dist, absdiff;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      PairRecord r;
      r.i = i;
      r.j = j;
      double acc = 0.0;
      for (std::size_t t = 0; t < points[i].size(); ++t) acc += (points[i][t] - points[j][t]) * (points[i][t] - points[j][t]);
      r.true_distance = std::sqrt(acc);
      r.embedded_distance = code_distance(pl, codes[i], codes[j]);
      acc = 0.0;
      for (std::size_t t = 0; t < linear[i].size(); ++t) acc += (linear[i][t] - linear[j][t]) * (linear[i][t] - linear[j][t]);
      r.linear_distance = std::sqrt(acc);
      const double gap = std::abs(r.embedded_distance - r.true_distance);
      r.multiplicative = r.true_distance > 0 ? gap / r.true_distance : 0.0;
      r.additive = std::max(0.0, gap - alpha * r.true_distance);
      r.quantization = std::abs(r.embedded_distance - r.linear_distance);
      rep.max_violation = std::max(rep.max_violation, gap - alpha * r.true_distance - eta_ref);
      dist.push_back(r.true_distance);
      absdiff.push_back(gap);
      rep.pairs.push_back(r);
    }
  }
  std::tie(rep.alpha_hat, rep.ls_eta) = detail::nonnegative_line_fit(dist, absdiff);
  double floor = 0.0;
  std::vector<double> add, quant;
  for (const auto& r : rep.pairs) {
    floor = std::max(floor, std::abs(r.embedded_distance - r.true_distance) - rep.alpha_hat * r.true_distance);
    add.push_back(r.additive);
    quant.push_back(r.quantization);
    rep.max_additive = std::max(rep.max_additive, r.additive);
    rep.max_quantization = std::max(rep.max_quantization, r.quantization);
  }
  rep.eta_hat = std::max(rep.ls_eta, floor);
  rep.median_additive = median_of(add);
  rep.median_quantization = median_of(quant);
  return rep;
}

struct GaussianWidth {
  double width = 0.0;
  double standard_error = 0.0;
  double radius = 0.0;
};

/// Monte Carlo E sup_{v in T} <v, g> over `samples` standard normal draws, and rad(T).
inline GaussianWidth gaussian_width_mc(std::span<const std::vector<double>> points, std::size_t samples,
                                       std::uint64_t seed) {
  if (points.empty()) throw ParameterError("gaussian_width_mc: empty set");
  if (samples == 0) throw ParameterError("gaussian_width_mc: need at least one sample");
  const std::size_t n = points.front().size();
  GaussianWidth out;
  for (const auto& v : points) {
    detail::require_same_size(v.size(), n, "gaussian_width_mc");
    out.radius = std::max(out.radius, detail::norm2(v));
  }
  Rng rng(seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto g = gaussian_vector(rng, n);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : points) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * g[i];
      best = std::max(best, dot);
    }
    sum += best;
    sumsq += best * best;
  }
  const double ns = static_cast<double>(samples);
  out.width = sum / ns;
  const double var = samples > 1 ? std::max(0.0, (sumsq - ns * out.width * out.width) / (ns - 1.0)) : 0.0;
  out.standard_error = std::sqrt(var / ns);
  return out;
}

enum class SchemeFamily { sigma_delta, beta };

/// Divisor of m nearest to m / ceil(log^2 m) (sigma-delta) or m / ceil(log m) (beta); ties go to the smaller.
inline std::size_t recommended_p(std::size_t m, SchemeFamily family) {
  if (m < 4) throw ParameterError("recommended_p: m must be at least 4");
  const double lm = std::log(static_cast<double>(m));
  const double denom = family == SchemeFamily::sigma_delta ? std::ceil(lm * lm) : std::ceil(lm);
  const double target = static_cast<double>(m) / denom;
  std::size_t best = 1;
  double best_gap = std::abs(target - 1.0);
  for (std::size_t d = 2; d <= m; ++d) {
    if (m % d != 0) continue;
    const double gap = std::abs(target - static_cast<double>(d));
    if (gap < best_gap) {
      best = d;
      best_gap = gap;
    }
  }
  return best;
}

// Packed code records: a 16-byte little-endian header followed by ceil(m/8)
// bytes, bit i (LSB first within byte i/8) set when q_i > 0.
//   bytes 0-3   magic "NSQB"
//   bytes 4-7   m        (uint32)
//   bytes 8-11  p        (uint32)
//   bytes 12-13 lambda   (uint16)
//   byte  14    scheme tag (0 msq, 1 sigma-delta, 2 beta)
//   byte  15    sigma-delta order (0 otherwise)

inline constexpr std::array<char, 4> kCodeMagic{'N', 'S', 'Q', 'B'};

enum class SchemeTag : std::uint8_t { msq = 0, sigma_delta = 1, beta = 2 };

struct CodeHeader {
  std::uint32_t m = 0;
  std::uint32_t p = 0;
  std::uint16_t lambda = 0;
  SchemeTag scheme = SchemeTag::msq;
  std::uint8_t order = 0;
  bool operator==(const CodeHeader&) const = default;
};

inline CodeHeader make_code_header(const EmbeddingPipeline& pl) {
  CodeHeader h;
  h.m = static_cast<std::uint32_t>(pl.condenser.m());
  h.p = static_cast<std::uint32_t>(pl.condenser.p());
  if (pl.condenser.lambda() > 0xFFFF) throw ParameterError("code header: lambda exceeds 65535");
  h.lambda = static_cast<std::uint16_t>(pl.condenser.lambda());
  if (const auto* sd = std::get_if<SigmaDelta>(&pl.shaper.scheme)) {
    h.scheme = SchemeTag::sigma_delta;
    h.order = static_cast<std::uint8_t>(sd->order);
  } else if (std::holds_alternative<Beta>(pl.shaper.scheme)) {
    h.scheme = SchemeTag::beta;
  }
  return h;
}

namespace detail {

inline void put_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Appends one record. Only the sign of each entry is stored, so multi-level codes lose their magnitude.
inline void write_code(std::ostream& os, const CodeHeader& h, std::span<const double> code) {
  detail::require_same_size(code.size(), h.m, "write_code");
  if (static_cast<std::uint64_t>(h.p) * h.lambda != h.m) throw DimensionError("write_code: p * lambda != m");
  os.write(kCodeMagic.data(), 4);
  detail::put_le(os, h.m, 4);
  detail::put_le(os, h.p, 4);
  detail::put_le(os, h.lambda, 2);
  detail::put_le(os, static_cast<std::uint8_t>(h.scheme), 1);
  detail::put_le(os, h.order, 1);
  std::vector<unsigned char> bits((code.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i] > 0) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  }
  os.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
}

struct CodeRecord {
  CodeHeader header;
  std::vector<double> code;  // entries +-1
};

/// Reads every record until end of stream; throws on a truncated or foreign record.
inline std::vector<CodeRecord> read_codes(std::istream& is) {
  std::vector<CodeRecord> out;
  for (;;) {
    unsigned char head[16];
    is.read(reinterpret_cast<char*>(head), 16);
    if (is.gcount() == 0) break;
    if (is.gcount() != 16) throw DimensionError("read_codes: truncated header");
    if (std::memcmp(head, kCodeMagic.data(), 4) != 0) throw ConstructionError("read_codes: bad magic");
    CodeRecord rec;
    rec.header.m = static_cast<std::uint32_t>(detail::get_le(head + 4, 4));
    rec.header.p = static_cast<std::uint32_t>(detail::get_le(head + 8, 4));
    rec.header.lambda = static_cast<std::uint16_t>(detail::get_le(head + 12, 2));
    if (head[14] > 2) throw ConstructionError("read_codes: unknown scheme tag");
    rec.header.scheme = static_cast<SchemeTag>(head[14]);
    rec.header.order = head[15];
    if (static_cast<std::uint64_t>(rec.header.p) * rec.header.lambda != rec.header.m) {
      throw DimensionError("read_codes: p * lambda != m");
    }
    std::vector<unsigned char> bits((rec.header.m + 7) / 8);
    is.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
    if (static_cast<std::size_t>(is.gcount()) != bits.size()) throw DimensionError("read_codes: truncated payload");
    rec.code.resize(rec.header.m);
    for (std::size_t i = 0; i < rec.header.m; ++i) rec.code[i] = (bits[i / 8] >> (i % 8)) & 1u ? 1.0 : -1.0;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace nsq
