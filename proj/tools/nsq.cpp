// nsq: command-line front end for embeddings, quantization, recovery and the experiment sweeps.
//
// Settings resolve as: flags > --config file > preset for the subcommand.
// Exit status: 0 success, 1 usage or parameter error, 2 invariant violation.

#include <nsq/nsq.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace nsq;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;

struct Flags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string kind;
};

void add_config_flags(CLI::App* cmd, Flags& f, bool with_kind) {
  static const std::vector<std::pair<std::string, std::string>> flags{
      {"ensemble", "hadamard | dft | pce"},
      {"n", "signal dimension (power of two)"},
      {"m", "number of measurements (0: p * lambda)"},
      {"p", "condensed dimension (0: m / lambda)"},
      {"lambda-sweep", "comma-separated block lengths"},
      {"k", "sparsity"},
      {"scheme", "sd:r=1 | beta:1.111 (comma-separated for several)"},
      {"L", "alphabet half size"},
      {"delta", "alphabet spacing"},
      {"trials", "seeds per sweep point"},
      {"seed", "master seed"},
      {"out", "output path prefix"},
      {"alpha", "multiplicative distortion"},
      {"eta-mode", "oracle | analytic"},
      {"rip-trials", "sampled vectors per RIP estimate"},
      {"points", "points per embedding trial"},
      {"base-k", "base sparsity for the multiresolution check"},
      {"base-alpha", "base distortion for the multiresolution check"},
      {"gnuplot", "also write a gnuplot script (true/false)"},
  };
  for (const auto& [name, help] : flags) f.options[name] = cmd->add_option("--" + name, f.values[name], help);
  cmd->add_option("--config", f.config_path, "key=value config file");
  if (with_kind) {
    cmd->add_option("--kind", f.kind, "embed-decay | recover-decay | rip-estimate | mrip-check | expectation-identity");
  }
}

ExperimentConfig resolve(const Flags& f, ExperimentKind kind) {
  ExperimentConfig c = preset(kind);
  if (!f.config_path.empty()) c = load_config(f.config_path, c);
  c.kind = kind;
  for (const auto& [name, opt] : f.options) {
    if (opt->count() > 0) apply_setting(c, name, f.values.at(name));
  }
  return c;
}

std::vector<std::vector<double>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = line.substr(0, line.find('#'));
    std::istringstream is(line);
    std::vector<double> row;
    std::string tok;
    while (is >> tok) row.push_back(detail::parse_double(tok, "input value"));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

void print_vector(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << detail::format_double(v[i]);
  os << '\n';
}

int run_sweep(const ExperimentConfig& c) {
  const auto out = run_experiment(c);
  const auto written = write_outputs(out);
  std::cout << render_summary(out);
  for (const auto& w : written) std::cout << "wrote " << w << '\n';
  return out.violations.empty() ? kExitOk : kExitViolation;
}

int run_embed(const ExperimentConfig& c, const std::string& input) {
  validate(c);
  const auto sp = sweep_points(c).front();
  const auto& s = c.schemes.front();
  auto pl = make_pipeline(sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(c.seed, 0)),
                          SignVector::random(c.n, derive_seed(c.seed, 1)),
                          make_condenser(s, sp.lambda, sp.p, Scaling::tilde), {Alphabet(c.L, c.delta)});
  std::vector<std::vector<double>> points;
  if (input.empty()) {
    Rng rng(derive_seed(c.seed, 2));
    points = random_l1_ball_points(c.n, c.points, c.k, rng);
  } else {
    points = read_rows(input);
  }
  const std::string path = c.out + ".codes";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParameterError("cannot write '" + path + "'");
  const auto header = make_code_header(pl);
  const double bound = 9.0 / 8.0 * eta_bound(pl.condenser.flavor(), sp.lambda, c.delta);
  std::size_t violations = 0;
  for (const auto& x : points) {
    const auto code = embed_point(pl, x);
    if (!code.warning.empty()) std::cerr << "warning: " << code.warning << '\n';
    const auto y = pre_quantization(pl, x);
    std::vector<double> diff(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) diff[i] = y[i] - code.q[i];
    if (code.certified && detail::norm2(pl.condenser.condense(diff)) > bound * (1.0 + 1e-12)) ++violations;
    write_code(os, header, code.q);
  }
  std::cout << provenance_line(c) << '\n'
            << "scheme " << to_string(s) << " n=" << c.n << " m=" << sp.m << " p=" << sp.p << " lambda=" << sp.lambda
            << '\n'
            << "wrote " << points.size() << " codes to " << path << '\n';
  if (points.size() >= 2) {
    const auto rep = evaluate_embedding(points, pl, c.alpha, bound);
    std::cout << "pairs " << rep.pairs.size() << "\nalpha_hat " << detail::format_double(rep.alpha_hat)
              << "\neta_hat " << detail::format_double(rep.eta_hat) << "\nmax_additive "
              << detail::format_double(rep.max_additive) << "\nmedian_quantization "
              << detail::format_double(rep.median_quantization) << "\nmax_violation_at_bound "
              << detail::format_double(rep.max_violation) << '\n';
  }
  if (violations > 0) {
    std::cerr << "violation: " << violations << " points exceed the condensed error bound\n";
    return kExitViolation;
  }
  return kExitOk;
}

int run_quantize(const ExperimentConfig& c, const std::string& input, double mu) {
  const auto sp = sweep_points(c).front();
  const auto& s = c.schemes.front();
  const Alphabet a(c.L, c.delta);
  const Scheme scheme = scheme_for(make_condenser(s, sp.lambda, sp.p, Scaling::raw).flavor(), sp.lambda);
  std::vector<double> y;
  if (input.empty()) {
    Rng rng(c.seed);
    std::uniform_real_distribution<double> dist(-mu, mu);
    y.resize(sp.m);
    for (auto& v : y) v = dist(rng);
  } else {
    for (const auto& row : read_rows(input)) y.insert(y.end(), row.begin(), row.end());
  }
  const auto code = quantize_noise_shaping(y, NoiseShaper{scheme, a});
  std::cout << "# " << describe(scheme) << " L=" << c.L << " delta=" << detail::format_double(c.delta)
            << " margin=" << detail::format_double(code.margin)
            << " max_state=" << detail::format_double(code.max_state) << '\n';
  if (!code.warning.empty()) std::cerr << "warning: " << code.warning << '\n';
  print_vector(std::cout, code.q);
  if (code.certified && code.max_state > c.delta) {
    std::cerr << "violation: state exceeds delta despite a nonnegative margin\n";
    return kExitViolation;
  }
  return kExitOk;
}

int run_recover(const ExperimentConfig& c) {
  validate(c);
  const auto sp = sweep_points(c).front();
  const auto& s = c.schemes.front();
  const Condenser hat = make_condenser(s, sp.lambda, sp.p, Scaling::hat);
  const auto e = sample_ensemble(c.ensemble, c.n, sp.m, derive_seed(c.seed, 0));
  const auto x = generate_sparse_signal(c.n, c.k, derive_seed(c.seed, 1), e).dense();
  const auto code =
      quantize_noise_shaping(e.apply(x), NoiseShaper{scheme_for(hat.flavor(), sp.lambda), Alphabet(c.L, c.delta)});
  const double analytic = choose_eta(hat.flavor(), sp.lambda, c.delta);
  const double realized = oracle_eta(e, hat, x, code.q);
  const double eta = c.eta_mode == "oracle" ? realized : analytic;
  const auto r = reconstruct(RecoveryProblem{&e, hat, code, eta, {}});
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += (r.x_hat[i] - x[i]) * (r.x_hat[i] - x[i]);
  std::cout << provenance_line(c) << '\n'
            << "scheme " << to_string(s) << " n=" << c.n << " m=" << sp.m << " p=" << sp.p << " lambda=" << sp.lambda
            << " k=" << c.k << '\n'
            << "eta (" << c.eta_mode << ") " << detail::format_double(eta) << "\nanalytic_eta "
            << detail::format_double(analytic) << "\nrealized_eta " << detail::format_double(realized)
            << "\nerror " << detail::format_double(std::sqrt(err)) << "\niterations " << r.solve.iterations
            << "\nconverged " << (r.solve.converged ? "true" : "false") << '\n';
  const std::string path = c.out + ".xhat.txt";
  std::ofstream os(path);
  if (!os) throw ParameterError("cannot write '" + path + "'");
  print_vector(os, r.x_hat);
  std::cout << "wrote " << path << '\n';
  if (code.certified && realized > analytic) {
    std::cerr << "violation: condensed error of the true signal exceeds the analytic eta\n";
    return kExitViolation;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsq: noise-shaped binary embeddings and quantized compressed sensing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nsq::kVersion));

  Flags embed_f, quant_f, recover_f, rip_f, mrip_f, ident_f, exp_f;
  std::string embed_input, quant_input;
  double mu = 8.0 / 9.0;

  auto* embed = app.add_subcommand("embed", "embed points and write packed codes to <out>.codes");
  add_config_flags(embed, embed_f, false);
  embed->add_option("--input", embed_input, "text file, one point per line");

  auto* quant = app.add_subcommand("quantize", "noise-shape a vector and print the code");
  add_config_flags(quant, quant_f, false);
  quant->add_option("--input", quant_input, "text file of input values");
  quant->add_option("--mu", mu, "amplitude of the random input when no --input is given");

  auto* recover = app.add_subcommand("recover", "quantize a random sparse signal and reconstruct it");
  add_config_flags(recover, recover_f, false);

  auto* rip = app.add_subcommand("rip", "sampled and exact RIP constants across the sweep");
  add_config_flags(rip, rip_f, false);
  auto* mrip = app.add_subcommand("mrip", "multiresolution RIP profile");
  add_config_flags(mrip, mrip_f, false);
  auto* ident = app.add_subcommand("identity", "sign-averaging identity by full enumeration");
  add_config_flags(ident, ident_f, false);
  auto* exp = app.add_subcommand("experiment", "run a named experiment sweep");
  add_config_flags(exp, exp_f, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (embed->parsed()) return run_embed(resolve(embed_f, ExperimentKind::embed_decay), embed_input);
    if (quant->parsed()) return run_quantize(resolve(quant_f, ExperimentKind::embed_decay), quant_input, mu);
    if (recover->parsed()) return run_recover(resolve(recover_f, ExperimentKind::recover_decay));
    if (rip->parsed()) return run_sweep(resolve(rip_f, ExperimentKind::rip_estimate));
    if (mrip->parsed()) return run_sweep(resolve(mrip_f, ExperimentKind::mrip_check));
    if (ident->parsed()) return run_sweep(resolve(ident_f, ExperimentKind::expectation_identity));
    if (exp->parsed()) {
      const auto kind = exp_f.kind.empty() ? ExperimentKind::embed_decay : parse_experiment_kind(exp_f.kind);
      return run_sweep(resolve(exp_f, kind));
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BudgetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
