#include <nsq/experiment.hpp>
#include <nsq/parallel.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace nsq;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig small_embed() {
  auto c = preset(ExperimentKind::embed_decay);
  c.n = 64;
  c.p = 4;
  c.lambda_sweep = {2, 4, 8};
  c.trials = 3;
  c.points = 6;
  return c;
}

}  // namespace

TEST(Scheme, Parse) {
  EXPECT_EQ(parse_scheme("sd").family, SchemeFamily::sigma_delta);
  EXPECT_EQ(parse_scheme("sd").order, 1);
  EXPECT_EQ(parse_scheme("sd:2").order, 2);
  EXPECT_EQ(parse_scheme("sd:r=3").order, 3);
  EXPECT_EQ(parse_scheme("sigma-delta").family, SchemeFamily::sigma_delta);
  EXPECT_EQ(parse_scheme("beta").beta, 10.0 / 9.0);
  EXPECT_EQ(parse_scheme("beta:10/9").beta, 10.0 / 9.0);
  EXPECT_EQ(parse_scheme("beta:1.25").beta, 1.25);
  EXPECT_THROW(parse_scheme("msq"), ParameterError);
  EXPECT_THROW(parse_scheme("sd:0"), ParameterError);
  EXPECT_THROW(parse_scheme("beta:1"), ParameterError);
  for (const char* s : {"sd:r=2", "beta:1.1000000000000001"}) EXPECT_EQ(to_string(parse_scheme(s)), s);
  EXPECT_EQ(parse_scheme(to_string(parse_scheme("beta:10/9"))).beta, 10.0 / 9.0);
}

TEST(Config, RoundTrip) {
  for (auto kind : {ExperimentKind::embed_decay, ExperimentKind::recover_decay, ExperimentKind::rip_estimate,
                    ExperimentKind::mrip_check, ExperimentKind::expectation_identity}) {
    auto c = preset(kind);
    c.schemes.push_back(parse_scheme("beta:1.05"));
    c.gnuplot = true;
    EXPECT_EQ(parse_config(serialize(c)), c) << to_string(kind);
    EXPECT_EQ(parse_experiment_kind(to_string(kind)), kind);
  }
}

TEST(Config, CommentsBlankLinesAndAliases) {
  const auto c = parse_config("# header\n\nn = 256  # trailing\nlambda = 2,4\nrip-trials=7\nscheme=sd:r=1\n");
  EXPECT_EQ(c.n, 256u);
  EXPECT_EQ(c.lambda_sweep, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(c.rip_trials, 7u);
  EXPECT_EQ(c.schemes.size(), 1u);
  EXPECT_EQ(c.schemes[0].family, SchemeFamily::sigma_delta);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("bogus = 1\n"), ParameterError);
  EXPECT_THROW(parse_config("n 5\n"), ParameterError);
  EXPECT_THROW(parse_config("n = -3\n"), ParameterError);
  EXPECT_THROW(parse_config("delta = abc\n"), ParameterError);
  EXPECT_THROW(load_config("/nonexistent/nsq.cfg"), ParameterError);
}

TEST(Config, BaseIsOverridden) {
  auto base = preset(ExperimentKind::recover_decay);
  const auto c = parse_config("k = 9\n", base);
  EXPECT_EQ(c.k, 9u);
  EXPECT_EQ(c.n, base.n);
}

TEST(Config, HashIgnoresOutputPath) {
  auto a = preset(ExperimentKind::embed_decay), b = a;
  b.out = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a), config_hash(preset(ExperimentKind::embed_decay)));
  EXPECT_EQ(detail::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(detail::fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Sweep, Points) {
  ExperimentConfig c;
  c.p = 8;
  c.m = 0;
  c.lambda_sweep = {2, 4};
  auto pts = sweep_points(c);
  EXPECT_EQ(pts[1].m, 32u);
  c.p = 0;
  c.m = 24;
  c.lambda_sweep = {3, 4, 8};
  pts = sweep_points(c);
  EXPECT_EQ(pts[2].p, 3u);
  c.lambda_sweep = {5};
  EXPECT_THROW(sweep_points(c), ParameterError);
  c.m = 0;
  EXPECT_THROW(sweep_points(c), ParameterError);
  c.p = 4;
  c.m = 12;
  c.lambda_sweep = {2};
  EXPECT_THROW(sweep_points(c), ParameterError);
}

TEST(Sweep, Validate) {
  auto c = preset(ExperimentKind::embed_decay);
  c.n = 1000;
  EXPECT_THROW(validate(c), ParameterError);
  c = preset(ExperimentKind::embed_decay);
  c.schemes = {parse_scheme("sd:r=2")};
  c.lambda_sweep = {4};
  EXPECT_THROW(validate(c), ParameterError);
  c.lambda_sweep = {5};
  EXPECT_NO_THROW(validate(c));
  c = preset(ExperimentKind::expectation_identity);
  c.m = 32;
  EXPECT_THROW(validate(c), ParameterError);
  c = preset(ExperimentKind::rip_estimate);
  c.ensemble = EnsembleKind::pce;
  c.m = 128;
  EXPECT_THROW(validate(c), ParameterError);
}

TEST(LineFit, Exact) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  const std::vector<double> one{1};
  EXPECT_THROW(linear_fit(one, one), ParameterError);
  const std::vector<double> flat{2, 2};
  EXPECT_THROW(linear_fit(flat, flat), ParameterError);
}

TEST(Parallel, RunsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Parallel, PropagatesException) {
  EXPECT_THROW(parallel_for(100, 3,
                            [](std::size_t i) {
                              if (i == 57) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(Parallel, ThreadEnvironment) {
  ::setenv("NSQ_THREADS", "3", 1);
  EXPECT_EQ(default_thread_count(), 3u);
  ::setenv("NSQ_THREADS", "junk", 1);
  EXPECT_GE(default_thread_count(), 1u);
  ::unsetenv("NSQ_THREADS");
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  const auto c = small_embed();
  ::setenv("NSQ_THREADS", "1", 1);
  const auto a = render_csv(run_experiment(c));
  ::setenv("NSQ_THREADS", "4", 1);
  const auto b = render_csv(run_experiment(c));
  ::unsetenv("NSQ_THREADS");
  EXPECT_EQ(a, b);
}

TEST(Experiment, CsvLayout) {
  const auto o = run_experiment(small_embed());
  const auto csv = render_csv(o);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, provenance_line(o.config));
  EXPECT_EQ(line.rfind("# nsq ", 0), 0u);
  std::getline(is, line);
  EXPECT_EQ(line.rfind(std::string(kCsvPrefix), 0), 0u);
  const auto columns = std::count(line.begin(), line.end(), ',');
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), columns);
    ++rows;
  }
  EXPECT_EQ(rows, o.table.rows.size());
  EXPECT_GE(rows, 3u);
}

TEST(Experiment, AllPresetsRunClean) {
  for (auto kind : {ExperimentKind::rip_estimate, ExperimentKind::expectation_identity}) {
    auto c = preset(kind);
    c.trials = 2;
    c.rip_trials = 300;
    const auto o = run_experiment(c);
    EXPECT_TRUE(o.violations.empty()) << to_string(kind);
    EXPECT_FALSE(o.summary.empty());
  }
  auto r = preset(ExperimentKind::recover_decay);
  r.n = 128;
  r.p = 16;
  r.trials = 2;
  r.lambda_sweep = {2, 4};
  EXPECT_TRUE(run_experiment(r).violations.empty());
  auto m = preset(ExperimentKind::mrip_check);
  m.rip_trials = 100;
  EXPECT_FALSE(run_experiment(m).table.rows.empty());
}

TEST(Experiment, WriteOutputs) {
  auto c = preset(ExperimentKind::expectation_identity);
  c.trials = 2;
  c.gnuplot = true;
  const auto dir = std::filesystem::temp_directory_path() / "nsq_test_outputs";
  std::filesystem::create_directories(dir);
  c.out = (dir / "ident").string();
  const auto o = run_experiment(c);
  const auto paths = write_outputs(o);
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(slurp(c.out + ".csv"), render_csv(o));
  const auto summary = slurp(c.out + ".summary.txt");
  EXPECT_NE(summary.find("[config]"), std::string::npos);
  EXPECT_NE(summary.find("[invariants]"), std::string::npos);
  EXPECT_NE(summary.find("all invariants hold"), std::string::npos);
  EXPECT_NE(slurp(c.out + ".gp").find("plot '" + c.out + ".csv'"), std::string::npos);
  std::filesystem::remove_all(dir);
  c.out = "/nonexistent/dir/x";
  EXPECT_THROW(write_outputs(run_experiment(c)), ParameterError);
}

TEST(Points, InsideL1Ball) {
  Rng rng(1);
  for (std::size_t k : {0u, 3u}) {
    for (const auto& x : random_l1_ball_points(50, 40, k, rng)) {
      double l1 = 0;
      std::size_t nz = 0;
      for (double v : x) {
        l1 += std::abs(v);
        nz += v != 0.0;
      }
      EXPECT_LE(l1, 1.0 + 1e-12);
      EXPECT_GE(l1, 0.2 - 1e-12);
      if (k) {
        EXPECT_LE(nz, k);
      }
    }
  }
}
