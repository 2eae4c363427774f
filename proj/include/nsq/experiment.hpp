#pragma once

// Experiment configuration, sweep orchestration and CSV / summary output.

#include <nsq/condense.hpp>
#include <nsq/diagnostics.hpp>
#include <nsq/embed.hpp>
#include <nsq/error.hpp>
#include <nsq/parallel.hpp>
#include <nsq/quantize.hpp>
#include <nsq/random.hpp>
#include <nsq/recover.hpp>
#include <nsq/transforms.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace nsq {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ExperimentKind { embed_decay, recover_decay, rip_estimate, mrip_check, expectation_identity };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::embed_decay: return "embed-decay";
    case ExperimentKind::recover_decay: return "recover-decay";
    case ExperimentKind::rip_estimate: return "rip-estimate";
    case ExperimentKind::mrip_check: return "mrip-check";
    case ExperimentKind::expectation_identity: return "expectation-identity";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::embed_decay, ExperimentKind::recover_decay, ExperimentKind::rip_estimate,
                 ExperimentKind::mrip_check, ExperimentKind::expectation_identity}) {
    if (s == to_string(k)) return k;
  }
  throw ParameterError("unknown experiment kind '" + std::string(s) + "'");
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    auto piece = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s, const char* what) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ParameterError(std::string(what) + ": cannot parse '" + t + "' as a number");
  }
  return v;
}

/// Decimal or a/b fraction.
inline double parse_real(std::string_view s, const char* what) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return parse_double(s, what);
  const double den = parse_double(s.substr(slash + 1), what);
  if (den == 0.0) throw ParameterError(std::string(what) + ": zero denominator");
  return parse_double(s.substr(0, slash), what) / den;
}

inline std::uint64_t parse_unsigned(std::string_view s, const char* what) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ParameterError(std::string(what) + ": cannot parse '" + t + "' as a nonnegative integer");
  }
  return v;
}

inline bool parse_bool(std::string_view s, const char* what) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ParameterError(std::string(what) + ": expected a boolean, got '" + t + "'");
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

/// Quantizer family plus its parameter (order r or beta).
struct SchemeSpec {
  SchemeFamily family = SchemeFamily::beta;
  int order = 1;
  double beta = 10.0 / 9.0;
  bool operator==(const SchemeSpec&) const = default;

  double parameter() const { return family == SchemeFamily::sigma_delta ? order : beta; }
};

inline std::string to_string(const SchemeSpec& s) {
  if (s.family == SchemeFamily::sigma_delta) return "sd:r=" + std::to_string(s.order);
  return "beta:" + detail::format_double(s.beta);
}

/// Accepts sd, sd:2, sd:r=2, beta, beta:1.111, beta:10/9.
inline SchemeSpec parse_scheme(std::string_view text) {
  const std::string t = detail::trim(text);
  const auto colon = t.find(':');
  const std::string head = t.substr(0, colon);
  std::string arg = colon == std::string::npos ? std::string{} : detail::trim(t.substr(colon + 1));
  SchemeSpec s;
  if (head == "sd" || head == "sigma-delta") {
    s.family = SchemeFamily::sigma_delta;
    if (arg.rfind("r=", 0) == 0) arg = arg.substr(2);
    if (!arg.empty()) {
      const auto r = detail::parse_unsigned(arg, "scheme order");
      if (r < 1 || r > 16) throw ParameterError("scheme: sigma-delta order must be in [1, 16]");
      s.order = static_cast<int>(r);
    }
  } else if (head == "beta") {
    s.family = SchemeFamily::beta;
    if (arg.rfind("beta=", 0) == 0) arg = arg.substr(5);
    if (!arg.empty()) s.beta = detail::parse_real(arg, "scheme beta");
    if (!(s.beta > 1.0)) throw ParameterError("scheme: beta must exceed 1");
  } else {
    throw ParameterError("unknown scheme '" + t + "' (expected sd:r=<order> or beta:<value>)");
  }
  return s;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::embed_decay;
  EnsembleKind ensemble = EnsembleKind::boe_hadamard;
  std::size_t n = 1024;
  std::size_t m = 0;  // 0: m = p * lambda at every sweep point
  std::size_t p = 16;  // 0: p = m / lambda at every sweep point
  std::vector<std::size_t> lambda_sweep{4, 8, 16, 32};
  std::size_t k = 8;
  std::vector<SchemeSpec> schemes{SchemeSpec{}};
  int L = 1;
  double delta = 1.0;
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  std::string out = "nsq_experiment";
  double alpha = 0.5;
  std::string eta_mode = "oracle";
  std::size_t rip_trials = 10000;
  std::size_t points = 32;
  std::size_t base_k = 2;
  double base_alpha = 0.5;
  bool gnuplot = false;

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "kind",   "ensemble", "n",          "m",      "p",      "lambda_sweep", "k",      "scheme",
      "L",      "delta",    "trials",     "seed",   "out",    "alpha",        "eta_mode", "rip_trials",
      "points", "base_k",   "base_alpha", "gnuplot"};
  return keys;
}

/// Sets one field from its text form. Keys accept '-' in place of '_'.
inline void apply_setting(ExperimentConfig& c, std::string_view key_in, std::string_view value) {
  std::string key = detail::trim(key_in);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = detail::trim(value);
  if (key == "kind") {
    c.kind = parse_experiment_kind(v);
  } else if (key == "ensemble") {
    try {
      c.ensemble = parse_ensemble_kind(v);
    } catch (const ConstructionError& e) {
      throw ParameterError(e.what());
    }
  } else if (key == "n") {
    c.n = detail::parse_unsigned(v, "n");
  } else if (key == "m") {
    c.m = detail::parse_unsigned(v, "m");
  } else if (key == "p") {
    c.p = detail::parse_unsigned(v, "p");
  } else if (key == "lambda_sweep" || key == "lambda") {
    c.lambda_sweep.clear();
    for (const auto& piece : detail::split(v, ',')) c.lambda_sweep.push_back(detail::parse_unsigned(piece, "lambda"));
  } else if (key == "k") {
    c.k = detail::parse_unsigned(v, "k");
  } else if (key == "scheme") {
    c.schemes.clear();
    for (const auto& piece : detail::split(v, ',')) c.schemes.push_back(parse_scheme(piece));
  } else if (key == "L") {
    c.L = static_cast<int>(detail::parse_unsigned(v, "L"));
  } else if (key == "delta") {
    c.delta = detail::parse_real(v, "delta");
  } else if (key == "trials") {
    c.trials = detail::parse_unsigned(v, "trials");
  } else if (key == "seed") {
    c.seed = detail::parse_unsigned(v, "seed");
  } else if (key == "out") {
    c.out = v;
  } else if (key == "alpha") {
    c.alpha = detail::parse_real(v, "alpha");
  } else if (key == "eta_mode") {
    if (v != "oracle" && v != "analytic") throw ParameterError("eta_mode must be 'oracle' or 'analytic'");
    c.eta_mode = v;
  } else if (key == "rip_trials") {
    c.rip_trials = detail::parse_unsigned(v, "rip_trials");
  } else if (key == "points") {
    c.points = detail::parse_unsigned(v, "points");
  } else if (key == "base_k") {
    c.base_k = detail::parse_unsigned(v, "base_k");
  } else if (key == "base_alpha") {
    c.base_alpha = detail::parse_real(v, "base_alpha");
  } else if (key == "gnuplot") {
    c.gnuplot = detail::parse_bool(v, "gnuplot");
  } else {
    throw ParameterError("unknown config key '" + key + "'");
  }
}

inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream os;
  auto join = [](const auto& items, auto&& fmt) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + fmt(items[i]);
    return s;
  };
  os << "kind=" << to_string(c.kind) << '\n'
     << "ensemble=" << to_string(c.ensemble) << '\n'
     << "n=" << c.n << '\n'
     << "m=" << c.m << '\n'
     << "p=" << c.p << '\n'
     << "lambda_sweep=" << join(c.lambda_sweep, [](std::size_t l) { return std::to_string(l); }) << '\n'
     << "k=" << c.k << '\n'
     << "scheme=" << join(c.schemes, [](const SchemeSpec& s) { return to_string(s); }) << '\n'
     << "L=" << c.L << '\n'
     << "delta=" << detail::format_double(c.delta) << '\n'
     << "trials=" << c.trials << '\n'
     << "seed=" << c.seed << '\n'
     << "out=" << c.out << '\n'
     << "alpha=" << detail::format_double(c.alpha) << '\n'
     << "eta_mode=" << c.eta_mode << '\n'
     << "rip_trials=" << c.rip_trials << '\n'
     << "points=" << c.points << '\n'
     << "base_k=" << c.base_k << '\n'
     << "base_alpha=" << detail::format_double(c.base_alpha) << '\n'
     << "gnuplot=" << (c.gnuplot ? "true" : "false") << '\n';
  return os.str();
}

/// Flat key=value text; '#' starts a comment. Settings are applied on top of `base`.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
  std::size_t line_no = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError("config line '" + line + "': expected key=value");
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// FNV-1a of the serialized config without the output path.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  copy.out.clear();
  return detail::fnv1a(serialize(copy));
}

/// Desk-scale defaults for each experiment kind.
inline ExperimentConfig preset(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::embed_decay:
      break;
    case ExperimentKind::recover_decay:
      c.n = 512;
      c.p = 64;
      c.k = 5;
      c.lambda_sweep = {2, 4, 8, 16};
      c.schemes = {SchemeSpec{SchemeFamily::sigma_delta, 1, 10.0 / 9.0}};
      c.L = 4;
      c.delta = 0.25;
      break;
    case ExperimentKind::rip_estimate:
      c.n = 64;
      c.m = 32;
      c.p = 0;
      c.k = 3;
      c.lambda_sweep = {8, 4, 2, 1};
      c.schemes = {SchemeSpec{SchemeFamily::sigma_delta, 1, 10.0 / 9.0}};
      break;
    case ExperimentKind::mrip_check:
      c.n = 64;
      c.p = 16;
      c.lambda_sweep = {2};
      c.trials = 1;
      c.rip_trials = 2000;
      c.schemes = {SchemeSpec{SchemeFamily::sigma_delta, 1, 10.0 / 9.0}};
      break;
    case ExperimentKind::expectation_identity:
      c.n = 8;
      c.m = 8;
      c.p = 0;
      c.lambda_sweep = {4};
      c.trials = 10;
      c.schemes = {SchemeSpec{SchemeFamily::sigma_delta, 1, 10.0 / 9.0}};
      break;
  }
  return c;
}

struct SweepPoint {
  std::size_t m = 0, p = 0, lambda = 0;
};

/// Resolves (m, p, lambda) for every sweep entry; lambda must divide m exactly.
inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
  std::vector<SweepPoint> out;
  if (c.lambda_sweep.empty()) {
    if (c.m == 0 || c.p == 0) throw ParameterError("sweep: give lambda_sweep, or both m and p");
    if (c.m % c.p != 0) throw ParameterError("sweep: p must divide m");
    out.push_back({c.m, c.p, c.m / c.p});
    return out;
  }
  for (std::size_t lambda : c.lambda_sweep) {
    if (lambda == 0) throw ParameterError("sweep: lambda must be >= 1");
    SweepPoint s;
    s.lambda = lambda;
    if (c.p > 0) {
      s.p = c.p;
      s.m = c.p * lambda;
      if (c.m > 0 && c.m != s.m) throw ParameterError("sweep: m, p and lambda are inconsistent");
    } else {
      if (c.m == 0) throw ParameterError("sweep: need m or p");
      if (c.m % lambda != 0) {
        throw ParameterError("sweep: lambda = " + std::to_string(lambda) + " does not divide m = " + std::to_string(c.m));
      }
      s.m = c.m;
      s.p = c.m / lambda;
    }
    out.push_back(s);
  }
  return out;
}

inline void validate(const ExperimentConfig& c) {
  if (c.n == 0) throw ParameterError("n must be >= 1");
  if (!is_power_of_two(c.n)) throw ParameterError("n must be a power of two");
  if (c.schemes.empty()) throw ParameterError("at least one scheme is required");
  if (c.L < 1) throw ParameterError("L must be >= 1");
  if (!(c.delta > 0.0)) throw ParameterError("delta must be positive");
  if (c.trials == 0) throw ParameterError("trials must be >= 1");
  const auto pts = sweep_points(c);
  for (const auto& sp : pts) {
    if (c.ensemble == EnsembleKind::pce && sp.m > c.n) throw ParameterError("circulant ensemble needs m <= n");
    for (const auto& s : c.schemes) {
      if (s.family == SchemeFamily::sigma_delta && !lambda_tilde_for(s.order, sp.lambda)) {
        throw ParameterError("lambda = " + std::to_string(sp.lambda) + " is not r*lambda_tilde - r + 1 for r = " +
                             std::to_string(s.order));
      }
    }
  }
  switch (c.kind) {
    case ExperimentKind::embed_decay:
      if (c.points < 2) throw ParameterError("embed-decay needs points >= 2");
      if (c.k > c.n) throw ParameterError("k exceeds n");
      break;
    case ExperimentKind::recover_decay:
    case ExperimentKind::rip_estimate:
      if (c.k == 0 || c.k > c.n) throw ParameterError("need 1 <= k <= n");
      break;
    case ExperimentKind::mrip_check:
      if (c.base_k == 0 || c.base_k > c.n) throw ParameterError("need 1 <= base_k <= n");
      break;
    case ExperimentKind::expectation_identity:
      for (const auto& sp : pts) {
        if (sp.m > kMaxEnumeratedSigns) throw ParameterError("expectation-identity needs m <= 16");
      }
      break;
  }
}

inline Condenser make_condenser(const SchemeSpec& s, std::size_t lambda, std::size_t p, Scaling scaling) {
  if (s.family == SchemeFamily::sigma_delta) return Condenser::sigma_delta_for_lambda(s.order, lambda, p, scaling);
  return Condenser::beta(s.beta, lambda, p, scaling);
}

/// `count` points in the unit l1 ball: k-sparse Gaussian directions (k = 0 means dense),
/// l1-normalized, radius uniform in [0.2, 1].
inline std::vector<std::vector<double>> random_l1_ball_points(std::size_t n, std::size_t count, std::size_t k,
                                                              Rng& rng) {
  if (k == 0 || k > n) k = n;
  std::uniform_real_distribution<double> radius(0.2, 1.0);
  std::vector<std::vector<double>> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> x(n, 0.0);
    const auto support = random_subset(rng, n, k);
    const auto g = gaussian_vector(rng, k);
    const double l1 = detail::norm1(g);
    const double r = radius(rng);
    for (std::size_t t = 0; t < k; ++t) x[support[t]] = l1 > 0 ? g[t] / l1 * r : 0.0;
    pts.push_back(std::move(x));
  }
  return pts;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LineFit linear_fit(std::span<const double> x, std::span<const double> y) {
  detail::require_same_size(y.size(), x.size(), "linear_fit");
  if (x.size() < 2) throw ParameterError("linear_fit: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ParameterError("linear_fit: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

inline constexpr std::string_view kCsvPrefix = "seed,n,m,p,lambda,scheme,r_or_beta,L,delta,trials";

struct CsvTable {
  std::string header;  // columns after the fixed prefix
  std::vector<std::string> rows;
};

struct ExperimentOutcome {
  ExperimentConfig config;
  CsvTable table;
  std::vector<std::string> summary;     // human-readable lines
  std::vector<std::string> violations;  // invariant violations; nonempty means exit code 2
  struct Series {
    std::string label;
    std::vector<double> x, y;
  };
  std::vector<Series> series;  // for plotting and slope fits
};

namespace detail {

inline std::string csv_prefix(const ExperimentConfig& c, const SweepPoint& sp, const SchemeSpec& s,
                              std::size_t trials) {
  std::ostringstream os;
  os << c.seed << ',' << c.n << ',' << sp.m << ',' << sp.p << ',' << sp.lambda << ',' << to_string(s) << ','
     << format_double(s.parameter()) << ',' << c.L << ',' << format_double(c.delta) << ',' << trials;
  return os.str();
}

inline std::string csv_values(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) s += ',' + format_double(v);
  return s;
}

inline double max_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t point, std::size_t scheme, std::size_t trial) {
  return derive_seed(derive_seed(derive_seed(master, point), scheme), trial);
}

inline void run_embed_decay(const ExperimentConfig& c, ExperimentOutcome& out) {
  out.table.header =
      "median_additive_residual,max_additive_residual,fitted_eta,median_alpha_residual,alpha_hat,eta_bound,"
      "max_condensed_error,bound_violations";
  const auto pts = sweep_points(c);
  for (std::size_t si = 0; si < c.schemes.size(); ++si) {
    const auto& s = c.schemes[si];
    ExperimentOutcome::Series series{to_string(s) + " median additive residual", {}, {}};
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      const auto& sp = pts[pi];
      struct Trial {
        double median_quant = 0, max_quant = 0, eta_hat = 0, median_add = 0, alpha_hat = 0, max_cond = 0;
        std::size_t violations = 0;
      };
      std::vector<Trial> res(c.trials);
      const double bound = 9.0 / 8.0 * eta_bound(make_condenser(s, sp.lambda, sp.p, Scaling::raw).flavor(),
                                                 sp.lambda, c.delta);
      parallel_for(c.trials, 0, [&](std::size_t t) {
        const std::uint64_t ts = trial_seed(c.seed, pi, si, t);
        auto pl = make_pipeline(sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(ts, 0)),
                                SignVector::random(c.n, derive_seed(ts, 1)),
                                make_condenser(s, sp.lambda, sp.p, Scaling::tilde), {Alphabet(c.L, c.delta)});
        Rng rng(derive_seed(ts, 2));
        const auto points = random_l1_ball_points(c.n, c.points, c.k, rng);
        const auto rep = evaluate_embedding(points, pl, c.alpha);
        Trial tr;
        tr.median_quant = rep.median_quantization;
        tr.max_quant = rep.max_quantization;
        tr.eta_hat = rep.eta_hat;
        tr.median_add = rep.median_additive;
        tr.alpha_hat = rep.alpha_hat;
        for (const auto& x : points) {
          const auto y = pre_quantization(pl, x);
          const auto code = quantize_noise_shaping(y, pl.shaper);
          std::vector<double> diff(y.size());
          for (std::size_t i = 0; i < y.size(); ++i) diff[i] = y[i] - code.q[i];
          const double err = norm2(pl.condenser.condense(diff));
          tr.max_cond = std::max(tr.max_cond, err);
          if (code.certified && err > bound * (1.0 + 1e-12)) ++tr.violations;
        }
        res[t] = tr;
      });
      std::vector<double> mq, xq, eh, ma, ah, mc;
      std::size_t violations = 0;
      for (const auto& r : res) {
        mq.push_back(r.median_quant);
        xq.push_back(r.max_quant);
        eh.push_back(r.eta_hat);
        ma.push_back(r.median_add);
        ah.push_back(r.alpha_hat);
        mc.push_back(r.max_cond);
        violations += r.violations;
      }
      const double med = median_of(mq);
      out.table.rows.push_back(csv_prefix(c, sp, s, c.trials) +
                               csv_values({med, max_of(xq), median_of(eh), median_of(ma), median_of(ah), bound,
                                           max_of(mc)}) +
                               ',' + std::to_string(violations));
      if (violations > 0) {
        out.violations.push_back("embed-decay " + to_string(s) + " lambda=" + std::to_string(sp.lambda) + ": " +
                                 std::to_string(violations) + " points exceed the condensed error bound");
      }
      series.x.push_back(static_cast<double>(sp.lambda));
      series.y.push_back(med);
    }
    out.series.push_back(series);
    if (series.x.size() >= 2 && std::all_of(series.y.begin(), series.y.end(), [](double v) { return v > 0; })) {
      std::vector<double> ly;
      for (double v : series.y) ly.push_back(std::log(v));
      const auto f = linear_fit(series.x, ly);
      out.summary.push_back(to_string(s) + ": log(median additive residual) vs lambda slope " + format_double(f.slope) +
                            ", R^2 " + format_double(f.r2));
    }
  }
}

inline void run_recover_decay(const ExperimentConfig& c, ExperimentOutcome& out) {
  out.table.header =
      "median_error,median_error_oracle,median_error_analytic,median_eta_oracle,eta_analytic,median_iterations,"
      "converged_fraction,feasibility_violations";
  const auto pts = sweep_points(c);
  const bool use_oracle = c.eta_mode == "oracle";
  for (std::size_t si = 0; si < c.schemes.size(); ++si) {
    const auto& s = c.schemes[si];
    ExperimentOutcome::Series series{to_string(s) + " median recovery error (" + c.eta_mode + " eta)", {}, {}};
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      const auto& sp = pts[pi];
      const Condenser hat = make_condenser(s, sp.lambda, sp.p, Scaling::hat);
      const double analytic = choose_eta(hat.flavor(), sp.lambda, c.delta);
      struct Trial {
        double err_oracle = 0, err_analytic = 0, eta_oracle = 0, iterations = 0;
        bool converged = false, infeasible = false;
      };
      std::vector<Trial> res(c.trials);
      parallel_for(c.trials, 0, [&](std::size_t t) {
        const std::uint64_t ts = trial_seed(c.seed, pi, si, t);
        const auto e = sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(ts, 0));
        const auto x = generate_sparse_signal(c.n, c.k, derive_seed(ts, 1), e).dense();
        const auto code =
            quantize_noise_shaping(e.apply(x), NoiseShaper{scheme_for(hat.flavor(), sp.lambda), Alphabet(c.L, c.delta)});
        Trial tr;
        tr.eta_oracle = oracle_eta(e, hat, x, code.q);
        tr.infeasible = code.certified && tr.eta_oracle > analytic;
        auto solve = [&](double eta) {
          const auto r = reconstruct(RecoveryProblem{&e, hat, code, eta, {}});
          double err = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) err += (r.x_hat[i] - x[i]) * (r.x_hat[i] - x[i]);
          return std::make_pair(std::sqrt(err), r.solve);
        };
        const auto [eo, so] = solve(tr.eta_oracle);
        const auto [ea, sa] = solve(analytic);
        tr.err_oracle = eo;
        tr.err_analytic = ea;
        const auto& primary = use_oracle ? so : sa;
        tr.iterations = static_cast<double>(primary.iterations);
        tr.converged = primary.converged;
        res[t] = tr;
      });
      std::vector<double> eo, ea, et, it;
      std::size_t conv = 0, infeasible = 0;
      for (const auto& r : res) {
        eo.push_back(r.err_oracle);
        ea.push_back(r.err_analytic);
        et.push_back(r.eta_oracle);
        it.push_back(r.iterations);
        conv += r.converged;
        infeasible += r.infeasible;
      }
      const double med = use_oracle ? median_of(eo) : median_of(ea);
      out.table.rows.push_back(csv_prefix(c, sp, s, c.trials) +
                               csv_values({med, median_of(eo), median_of(ea), median_of(et), analytic, median_of(it),
                                           static_cast<double>(conv) / static_cast<double>(c.trials)}) +
                               ',' + std::to_string(infeasible));
      if (infeasible > 0) {
        out.violations.push_back("recover-decay " + to_string(s) + " lambda=" + std::to_string(sp.lambda) + ": " +
                                 std::to_string(infeasible) + " trials with ||V^(Phi x - q)|| above the analytic eta");
      }
      series.x.push_back(static_cast<double>(sp.lambda));
      series.y.push_back(med);
    }
    out.series.push_back(series);
    if (series.x.size() >= 2 && std::all_of(series.y.begin(), series.y.end(), [](double v) { return v > 0; })) {
      std::vector<double> lx, ly;
      for (std::size_t i = 0; i < series.x.size(); ++i) {
        lx.push_back(std::log(series.x[i]));
        ly.push_back(std::log(series.y[i]));
      }
      const auto loglog = linear_fit(lx, ly);
      const auto loglin = linear_fit(series.x, ly);
      out.summary.push_back(to_string(s) + ": log-log slope " + format_double(loglog.slope) + " (R^2 " +
                            format_double(loglog.r2) + "), log-linear slope " + format_double(loglin.slope) +
                            " (R^2 " + format_double(loglin.r2) + ")");
    }
  }
}

inline void run_rip_estimate(const ExperimentConfig& c, ExperimentOutcome& out) {
  out.table.header = "k,rip_trials,median_delta,min_delta,max_delta,exact_delta,sampled_exceeds_exact";
  const auto pts = sweep_points(c);
  for (std::size_t si = 0; si < c.schemes.size(); ++si) {
    const auto& s = c.schemes[si];
    ExperimentOutcome::Series series{to_string(s) + " median sampled delta_k", {}, {}};
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      const auto& sp = pts[pi];
      const Condenser hat = make_condenser(s, sp.lambda, sp.p, Scaling::hat);
      const bool exact_ok = binomial_count(c.n, c.k) <= kExactRipBudget;
      std::vector<double> deltas(c.trials), exact(c.trials, -1.0);
      parallel_for(c.trials, 0, [&](std::size_t t) {
        const std::uint64_t ts = trial_seed(c.seed, pi, si, t);
        const auto e = sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(ts, 0));
        deltas[t] = estimate_rip(e, hat, c.k, c.rip_trials, derive_seed(ts, 1), 1).delta;
        if (exact_ok && t == 0) exact[t] = exact_rip_small(e, hat, c.k);
      });
      const bool exceeds = exact_ok && deltas[0] > exact[0] + 1e-9;
      if (exceeds) {
        out.violations.push_back("rip-estimate p=" + std::to_string(sp.p) + ": sampled delta exceeds exact delta");
      }
      const double med = median_of(deltas);
      out.table.rows.push_back(csv_prefix(c, sp, s, c.trials) + ',' + std::to_string(c.k) + ',' +
                               std::to_string(c.rip_trials) +
                               csv_values({med, *std::min_element(deltas.begin(), deltas.end()), max_of(deltas),
                                           exact_ok ? exact[0] : std::nan("")}) +
                               ',' + (exceeds ? "1" : "0"));
      series.x.push_back(static_cast<double>(sp.p));
      series.y.push_back(med);
    }
    out.series.push_back(series);
    bool decreasing = true;
    for (std::size_t i = 1; i < series.y.size(); ++i) decreasing = decreasing && series.y[i] < series.y[i - 1];
    out.summary.push_back(to_string(s) + ": median delta_" + std::to_string(c.k) +
                          (decreasing ? " decreases" : " does not decrease") + " along the sweep");
  }
}

inline void run_mrip_check(const ExperimentConfig& c, ExperimentOutcome& out) {
  out.table.header = "level,sparsity,threshold,median_delta,exact,pass";
  const auto pts = sweep_points(c);
  for (std::size_t si = 0; si < c.schemes.size(); ++si) {
    const auto& s = c.schemes[si];
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      const auto& sp = pts[pi];
      const Condenser hat = make_condenser(s, sp.lambda, sp.p, Scaling::hat);
      std::vector<MripReport> reps(c.trials);
      parallel_for(c.trials, 0, [&](std::size_t t) {
        const std::uint64_t ts = trial_seed(c.seed, pi, si, t);
        const auto e = sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(ts, 0));
        reps[t] = mrip_check(e, hat, c.base_k, c.base_alpha, c.rip_trials, derive_seed(ts, 1));
      });
      int first_fail = -1;
      for (std::size_t l = 0; l < reps[0].levels.size(); ++l) {
        std::vector<double> d;
        for (const auto& r : reps) d.push_back(r.levels[l].delta);
        const auto& lv = reps[0].levels[l];
        const double med = median_of(d);
        const bool pass = med <= lv.threshold;
        if (!pass && first_fail < 0) first_fail = static_cast<int>(l);
        out.table.rows.push_back(csv_prefix(c, sp, s, c.trials) + ',' + std::to_string(l) + ',' +
                                 std::to_string(lv.sparsity) + csv_values({lv.threshold, med}) + ',' +
                                 (lv.exact ? "1" : "0") + ',' + (pass ? "1" : "0"));
      }
      out.summary.push_back(to_string(s) + " p=" + std::to_string(sp.p) + ": " +
                            (first_fail < 0 ? std::string("all levels pass")
                                            : "first failing level " + std::to_string(first_fail)));
    }
  }
}

inline void run_expectation_identity(const ExperimentConfig& c, ExperimentOutcome& out) {
  out.table.header = "points,max_relative_error,pass";
  const auto pts = sweep_points(c);
  for (std::size_t si = 0; si < c.schemes.size(); ++si) {
    const auto& s = c.schemes[si];
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      const auto& sp = pts[pi];
      const Condenser raw = make_condenser(s, sp.lambda, sp.p, Scaling::raw);
      const std::uint64_t ts = trial_seed(c.seed, pi, si, 0);
      const auto e = sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(ts, 0));
      const auto rep = expectation_identity_check(e, raw, c.trials, derive_seed(ts, 1));
      const bool pass = rep.max_relative_error < 1e-10;
      if (!pass) {
        out.violations.push_back("expectation-identity m=" + std::to_string(sp.m) + ": relative error " +
                                 format_double(rep.max_relative_error));
      }
      out.table.rows.push_back(csv_prefix(c, sp, s, c.trials) + ',' + std::to_string(c.trials) +
                               csv_values({rep.max_relative_error}) + ',' + (pass ? "1" : "0"));
      out.summary.push_back(to_string(s) + " m=" + std::to_string(sp.m) + " p=" + std::to_string(sp.p) +
                            ": max relative error " + format_double(rep.max_relative_error));
    }
  }
}

}  // namespace detail

/// Runs the configured sweep. Throws ParameterError on an invalid config.
inline ExperimentOutcome run_experiment(const ExperimentConfig& c) {
  validate(c);
  ExperimentOutcome out;
  out.config = c;
  switch (c.kind) {
    case ExperimentKind::embed_decay: detail::run_embed_decay(c, out); break;
    case ExperimentKind::recover_decay: detail::run_recover_decay(c, out); break;
    case ExperimentKind::rip_estimate: detail::run_rip_estimate(c, out); break;
    case ExperimentKind::mrip_check: detail::run_mrip_check(c, out); break;
    case ExperimentKind::expectation_identity: detail::run_expectation_identity(c, out); break;
  }
  return out;
}

inline std::string provenance_line(const ExperimentConfig& c) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  return "# nsq " + std::string(kVersion) + " seed=" + std::to_string(c.seed) + " config_hash=" + hash +
         " kind=" + std::string(to_string(c.kind));
}

inline std::string render_csv(const ExperimentOutcome& o) {
  std::string s = provenance_line(o.config) + '\n';
  s += std::string(kCsvPrefix) + ',' + o.table.header + '\n';
  for (const auto& row : o.table.rows) s += row + '\n';
  return s;
}

inline std::string render_summary(const ExperimentOutcome& o) {
  std::string s = provenance_line(o.config) + "\n\n[config]\n" + serialize(o.config) + "\n[results]\n";
  for (const auto& line : o.summary) s += line + '\n';
  s += "\n[invariants]\n";
  if (o.violations.empty()) s += "all invariants hold\n";
  for (const auto& v : o.violations) s += "VIOLATION " + v + '\n';
  return s;
}

/// gnuplot script plotting each series from the CSV written next to it.
inline std::string render_gnuplot(const ExperimentOutcome& o, const std::string& csv_path) {
  const bool rip = o.config.kind == ExperimentKind::rip_estimate;
  std::ostringstream os;
  os << provenance_line(o.config) << '\n'
     << "set datafile separator ','\nset key autotitle columnhead\nset logscale y\nset grid\n"
     << "set terminal pngcairo size 900,600\nset output '" << csv_path << ".png'\n"
     << "set xlabel '" << (rip ? "p" : "lambda") << "'\n";
  os << "plot '" << csv_path << "' using " << (rip ? 4 : 5) << ':' << (rip ? 13 : 11) << " with linespoints title '"
     << to_string(o.config.kind) << "'\n";
  return os.str();
}

/// Writes <out>.csv, <out>.summary.txt and, when requested, <out>.gp. Returns the paths written.
inline std::vector<std::string> write_outputs(const ExperimentOutcome& o) {
  const std::string base = o.config.out;
  std::vector<std::string> written;
  auto put = [&](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParameterError("cannot write '" + path + "'");
    f << text;
    written.push_back(path);
  };
  put(base + ".csv", render_csv(o));
  put(base + ".summary.txt", render_summary(o));
  if (o.config.gnuplot) put(base + ".gp", render_gnuplot(o, base + ".csv"));
  return written;
}

}  // namespace nsq
