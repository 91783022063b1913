#include "ummec/harness.hpp"

#include <algorithm>
#include <random>

namespace ummec {

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  constexpr Index n_way = 5;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradcheckReport report;

  for (int inst = 0; inst < options.instances; ++inst) {
    // n <= 12 with five classes: one or two shots plus a few queries.
    const Index k_shot = std::uniform_int_distribution<Index>(1, 2)(rng);
    const Index n = n_way * k_shot + std::uniform_int_distribution<Index>(0, 12 - n_way * k_shot)(rng);
    const Index d = std::uniform_int_distribution<Index>(2, 5)(rng);

    Matrix z(n, d);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) z(i, j) = gauss(rng);
      z.row(i).normalize();
    }
    std::vector<LabeledIndex> labeled;
    for (Index i = 0; i < n_way * k_shot; ++i) labeled.push_back({i, i % n_way});

    LossParams params;
    params.pair_scope = inst % 2 == 0 ? PairScope::all_pairs : PairScope::same_class_pairs;
    const Objective objective(EpisodeLabels::from_labeled(n, n_way, labeled), params);

    Matrix analytic;
    objective.evaluate(z, params.mu, &analytic, nullptr);
    Matrix numeric(n, d);
    Matrix probe = z;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) {
        probe(i, j) = z(i, j) + options.h;
        const double up = objective.value(probe).total;
        probe(i, j) = z(i, j) - options.h;
        const double down = objective.value(probe).total;
        probe(i, j) = z(i, j);
        numeric(i, j) = (up - down) / (2.0 * options.h);
      }
    }
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
    const double rel = (analytic - numeric).cwiseAbs().maxCoeff() / scale;
    report.instances.push_back({n, d, params.pair_scope, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

} // namespace ummec
