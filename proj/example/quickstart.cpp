// Embeds a few points with the beta scheme, compares code distances with true
// distances, then recovers a sparse signal from its sigma-delta code.

#include <nsq/nsq.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

int main() {
  using namespace nsq;

  const std::size_t n = 256, p = 32, lambda = 8;
  auto pl = make_pipeline(sample_ensemble(EnsembleKind::boe_hadamard, n, p * lambda, 1), SignVector::random(n, 2),
                          Condenser::beta(10.0 / 9.0, lambda, p, Scaling::tilde));

  Rng rng(3);
  const auto points = random_l1_ball_points(n, 6, 0, rng);
  const auto rep = evaluate_embedding(points, pl, 0.5);
  std::printf("pair   true      embedded\n");
  for (const auto& r : rep.pairs) {
    std::printf("%zu-%zu   %.5f   %.5f\n", r.i, r.j, r.true_distance, r.embedded_distance);
  }
  std::printf("fitted alpha %.4f, additive floor %.4f\n\n", rep.alpha_hat, rep.eta_hat);

  const std::size_t m = 512, rp = 64;
  const auto e = sample_ensemble(EnsembleKind::boe_hadamard, 512, m, 4);
  const auto x = generate_sparse_signal(512, 5, 5, e).dense();
  const auto hat = Condenser::sigma_delta(1, m / rp, rp, Scaling::hat);
  const auto code = quantize_sigma_delta(e.apply(x), 1, Alphabet(1, 1.0));
  const auto out = reconstruct(RecoveryProblem{&e, hat, code, oracle_eta(e, hat, x, code.q), {}});
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += (out.x_hat[i] - x[i]) * (out.x_hat[i] - x[i]);
  std::printf("sigma-delta r=1, lambda=%zu: ||x_hat - x|| = %.4f after %zu iterations\n", m / rp, std::sqrt(err),
              out.solve.iterations);
}
