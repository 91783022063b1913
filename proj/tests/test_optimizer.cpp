#include "oracles.hpp"

#include "ummec/episodes.hpp"
#include "ummec/errors.hpp"
#include "ummec/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ummec;

TEST_CASE("init_embeddings") {
  Matrix x(2, 2);
  x << 3, 4, 0.6, 0.8;
  const EmbeddingState s = init_embeddings(x);
  CHECK(s.z(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(s.z(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(s.z(1, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(s.z(1, 1) == doctest::Approx(0.8).epsilon(1e-15));

  const Matrix r = oracle::random_matrix(10, 8, 3, 5.0);
  const EmbeddingState rs = init_embeddings(r);
  for (Index i = 0; i < 10; ++i) CHECK(std::abs(rs.z.row(i).norm() - 1.0) < 1e-12);

  Matrix bad = oracle::random_matrix(4, 3, 1);
  bad.row(2).setZero();
  try {
    init_embeddings(bad);
    FAIL("expected InvalidInput");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
  }
}

namespace {

struct BlobEpisode {
  Matrix z0;
  EpisodeLabels labels;
};

// 5-way 1-shot with 5 queries per class from well separated blobs.
BlobEpisode blob_episode(std::uint64_t seed) {
  static const FeatureSet fs = gaussian_blobs({8, 16, 40, 10.0, 1.0, 123});
  const Episode ep = sample_episode(fs, 5, 1, 5, seed);
  return {init_embeddings(episode_features(fs, ep)).z, episode_labels(ep)};
}

} // namespace

TEST_CASE("config validation") {
  OptimConfig c;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.adam_beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.learning_rate = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("a zero learning rate leaves the state untouched") {
  const BlobEpisode be = blob_episode(1);
  OptimConfig c;
  c.steps = 1;
  c.learning_rate = 0.0;
  const OptimResult r = optimize_episode({be.z0}, be.labels, LossParams{}, c);
  CHECK(r.state.z == be.z0);
  CHECK(r.trace.size() == 2);
}

TEST_CASE("rows stay on the sphere and the trace stays finite") {
  const BlobEpisode be = blob_episode(2);
  OptimConfig c;
  c.steps = 40;
  int calls = 0;
  const OptimResult r = optimize_episode({be.z0}, be.labels, LossParams{}, c, {},
                                         [&](int step, const LossValue& v, const EmbeddingState& s) {
                                           ++calls;
                                           CHECK(step == calls);
                                           CHECK(std::isfinite(v.total));
                                           for (Index i = 0; i < s.z.rows(); ++i)
                                             CHECK(std::abs(s.z.row(i).norm() - 1.0) <= 1e-9);
                                         });
  CHECK(calls == 40);
  CHECK(r.trace.size() == 41);
  for (const auto& v : r.trace) CHECK(std::isfinite(v.total));
}

TEST_CASE("optimization is deterministic") {
  const BlobEpisode be = blob_episode(3);
  OptimConfig c;
  c.steps = 30;
  c.seed = 9;
  const OptimResult a = optimize_episode({be.z0}, be.labels, LossParams{}, c);
  const OptimResult b = optimize_episode({be.z0}, be.labels, LossParams{}, c);
  CHECK(a.state.z == b.state.z);
  CHECK(a.trace.back().total == b.trace.back().total);
}

TEST_CASE("optimization descends on separated blobs") {
  int descended = 0;
  OptimConfig c;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const BlobEpisode be = blob_episode(1000 + seed);
    const OptimResult r = optimize_episode({be.z0}, be.labels, LossParams{}, c);
    if (r.trace.back().total <= r.trace.front().total) ++descended;
  }
  MESSAGE("descended in " << descended << " of 100 episodes");
  CHECK(descended >= 95);
}

TEST_CASE("learn_mu moves the sigmoid scale") {
  const BlobEpisode be = blob_episode(4);
  OptimConfig c;
  c.steps = 10;
  c.learn_mu = true;
  const OptimResult r = optimize_episode({be.z0}, be.labels, LossParams{}, c);
  CHECK(r.mu != 1.0);
  c.learn_mu = false;
  CHECK(optimize_episode({be.z0}, be.labels, LossParams{}, c).mu == 1.0);
}

TEST_CASE("divergence is reported with its step") {
  const BlobEpisode be = blob_episode(5);
  OptimConfig c;
  c.steps = 5;
  c.learning_rate = 1e308;
  try {
    optimize_episode({be.z0}, be.labels, LossParams{}, c);
    FAIL("expected Diverged");
  } catch (const Diverged& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("off-sphere initial state is rejected") {
  const BlobEpisode be = blob_episode(6);
  CHECK_THROWS_AS(optimize_episode({be.z0 * 2.0}, be.labels, LossParams{}, OptimConfig{}), InvalidState);
}

TEST_CASE("trace csv") {
  std::vector<LossValue> trace(3);
  trace[1].total = 0.5;
  std::ostringstream os;
  write_trace_csv(os, trace);
  const std::string s = os.str();
  CHECK(s.rfind("step,total,local,global,uniformity,classification\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
