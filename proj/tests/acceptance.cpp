// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "oracles.hpp"

#include "ummec/decov.hpp"
#include "ummec/episodes.hpp"
#include "ummec/errors.hpp"
#include "ummec/harness.hpp"
#include "ummec/losses.hpp"
#include "ummec/sinkhorn.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#ifndef UMMEC_CLI_PATH
#error "UMMEC_CLI_PATH must name the ummec executable"
#endif

using namespace ummec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kWork = fs::temp_directory_path() / "ummec_acceptance";

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + UMMEC_CLI_PATH + "\" " + args + " 2>>\"" +
                          (kWork / "cli_stderr.log").string() + "\"";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : -1);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// --- 1 ---------------------------------------------------------------------

Outcome protocol_on_user_file() {
  Outcome o;
  const fs::path file = kWork / "user_features.umfe";
  o.require(run_cli("gen-blobs --blob-classes 12 --blob-dim 16 --blob-per-class 25 --separation 6 "
                    "--noise 1 --blob-seed 5 --out \"" + file.string() + "\"") == 0,
            "gen-blobs failed");
  for (const int k : {1, 5}) {
    const fs::path base = kWork / ("protocol_k" + std::to_string(k) + ".json");
    const int rc = run_cli("eval --data \"" + file.string() + "\" --format umfe -n 5 -k " + std::to_string(k) +
                           " -q 15 --episodes 10000 --seed 0 --no-local --no-global --no-ummc --out \"" +
                           base.string() + "\"");
    o.require(rc == 0, "baseline protocol run exit " + std::to_string(rc));
    if (rc == 0) {
      const auto j = read_json(base);
      o.require(j["episodes"] == 10000 && j["failed_episodes"] == 0, "K=" + std::to_string(k) + " episode count");
      o.require(j["config"]["n_way"] == 5 && j["config"]["k_shot"] == k && j["config"]["q_queries"] == 15,
                "K=" + std::to_string(k) + " echoed shape");
    }
    const fs::path full = kWork / ("protocol_full_k" + std::to_string(k) + ".json");
    const int rc_full = run_cli("eval --data \"" + file.string() + "\" --format umfe -n 5 -k " +
                                std::to_string(k) + " -q 15 --episodes 20 --seed 0 --out \"" + full.string() + "\"");
    o.require(rc_full == 0, "full pipeline on user file exit " + std::to_string(rc_full));
    if (rc_full == 0) {
      const auto j = read_json(full);
      o.require(j["healthy"] == true && j["episodes"] == 20, "full pipeline K=" + std::to_string(k));
    }
  }
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("10000-episode runs for K=1 and K=5, full pipeline smoke");
  return o;
}

// --- 2 ---------------------------------------------------------------------

Outcome centering_identity() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = std::uniform_int_distribution<Index>(2, 20)(rng);
    const Index d = std::uniform_int_distribution<Index>(1, 8)(rng);
    const Matrix z = oracle::random_matrix(n, d, 1000 + static_cast<std::uint64_t>(t), 4.0);
    const DecovMatrix dm = double_center(elementwise_sqrt(pairwise_sq_dists(z)), n);
    const double sums = std::max(dm.d.rowwise().sum().cwiseAbs().maxCoeff(), dm.d.colwise().sum().cwiseAbs().maxCoeff());
    worst = std::max(worst, sums / static_cast<double>(n));
    o.require(sums <= 1e-9 * static_cast<double>(n), "case " + std::to_string(t) + " sum " + fmt(sums));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, "took " + fmt(secs) + " s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("max |sum|/n = ") + fmt(worst) + ", " + fmt(secs) + " s";
  return o;
}

// --- 3 ---------------------------------------------------------------------

Outcome gradient_check() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  double worst = 0.0;
  const Index n_way = 5;
  for (int t = 0; t < 10; ++t) {
    const Index k_shot = std::uniform_int_distribution<Index>(1, 2)(rng);
    const Index n = n_way * k_shot + std::uniform_int_distribution<Index>(0, 12 - n_way * k_shot)(rng);
    const Index d = std::uniform_int_distribution<Index>(2, 5)(rng);
    const Matrix z = oracle::random_unit_rows(n, d, 300 + static_cast<std::uint64_t>(t));
    std::vector<LabeledIndex> labeled;
    std::vector<oracle::Label> support;
    for (Index i = 0; i < n_way * k_shot; ++i) {
      labeled.push_back({i, i % n_way});
      support.push_back({i, i % n_way});
    }
    const EpisodeLabels labels = EpisodeLabels::from_labeled(n, n_way, labeled);
    LossParams params;
    params.pair_scope = t % 2 == 0 ? PairScope::all_pairs : PairScope::same_class_pairs;
    std::vector<std::optional<Index>> known(static_cast<std::size_t>(n));
    for (const auto& s : support) known[static_cast<std::size_t>(s.index)] = s.cls;

    // Independent loop-based objective, defined on all of R^{n x d}.
    auto reference = [&](const Matrix& x) {
      const Matrix dv = oracle::decov(x);
      const Matrix protos = oracle::class_means(dv, support, n_way);
      const double global = params.alpha * oracle::uniformity(protos, params.gamma) +
                            (1.0 - params.alpha) * oracle::cross_entropy(dv, protos, support);
      const double local = oracle::local_alignment(
          x, params.lambda_w, params.mu, params.pair_scope == PairScope::same_class_pairs ? &known : nullptr);
      return params.eta * local + (1.0 - params.eta) * global;
    };
    const Matrix analytic = total_loss_gradient(z, labels, params);
    const Matrix numeric = oracle::finite_diff(reference, z, 1e-5);
    const double rel = (analytic - numeric).cwiseAbs().maxCoeff() / std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
    worst = std::max(worst, rel);
    o.require(rel < 1e-4, "instance " + std::to_string(t) + " rel " + fmt(rel));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + fmt(secs) + " s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("max rel error ") + fmt(worst) + ", " + fmt(secs) + " s";
  return o;
}

// --- 4 ---------------------------------------------------------------------

Outcome sinkhorn_correctness() {
  Outcome o;
  std::mt19937_64 rng(4);

  // (a) Residuals measured from the returned plan, not the reported field.
  SinkhornConfig cfg;
  cfg.inner_max_iters = 20000;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = std::uniform_int_distribution<Index>(1, 30)(rng);
    const Index k = std::uniform_int_distribution<Index>(1, 5)(rng);
    const Matrix cost = oracle::random_matrix(n, k, 400 + static_cast<std::uint64_t>(t)).cwiseAbs() * 2.0;
    Vector r = oracle::random_matrix(n, 1, 500 + static_cast<std::uint64_t>(t)).cwiseAbs().array() + 0.1;
    r /= r.sum();
    const Vector c = uniform_marginal(k);
    const TransportPlan plan = sinkhorn_plan(cost, r, c, cfg);
    const double res = std::max((plan.p.rowwise().sum() - r).cwiseAbs().maxCoeff(),
                                (plan.p.colwise().sum().transpose() - c).cwiseAbs().maxCoeff());
    worst = std::max(worst, res);
    o.require(res < 1e-6 && plan.converged, "(a) case " + std::to_string(t) + " residual " + fmt(res));
  }

  // (b) Near-LP limit against exhaustive balanced assignment.
  const std::vector<std::pair<Index, Index>> shapes{{2, 2}, {4, 2}, {6, 2}, {3, 3}, {6, 3}, {5, 1}};
  SinkhornConfig sharp;
  sharp.lambda_ot = 50.0;
  sharp.inner_max_iters = 20000;
  int matched = 0;
  for (int t = 0; t < 100; ++t) {
    const auto [n, k] = shapes[static_cast<std::size_t>(t) % shapes.size()];
    const Matrix cost = oracle::random_matrix(n, k, 600 + static_cast<std::uint64_t>(t)).cwiseAbs();
    const TransportPlan plan = sinkhorn_plan(cost, uniform_marginal(n), uniform_marginal(k), sharp);
    const auto best = oracle::balanced_assignment(cost);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    const auto got = classify_by_plan(plan, rows);
    bool same = true;
    for (Index i = 0; i < n; ++i) same &= got[static_cast<std::size_t>(i)] == best[static_cast<std::size_t>(i)];
    matched += same;
  }
  o.require(matched >= 95, "(b) matched " + std::to_string(matched) + "/100");

  // (c) Uniform cost.
  double uni = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Index n = 3 + t, k = 1 + t % 5;
    Vector r = oracle::random_matrix(n, 1, 700 + static_cast<std::uint64_t>(t)).cwiseAbs().array() + 0.1;
    r /= r.sum();
    Vector c = oracle::random_matrix(k, 1, 800 + static_cast<std::uint64_t>(t)).cwiseAbs().array() + 0.1;
    c /= c.sum();
    const TransportPlan plan = sinkhorn_plan(Matrix::Constant(n, k, 0.7), r, c, SinkhornConfig{});
    uni = std::max(uni, (plan.p - r * c.transpose()).cwiseAbs().maxCoeff());
  }
  o.require(uni < 1e-8, "(c) deviation " + fmt(uni));
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("(a) max residual ") + fmt(worst) + ", (b) " +
              std::to_string(matched) + "/100, (c) " + fmt(uni);
  return o;
}

// --- 5 ---------------------------------------------------------------------

Outcome loss_limits() {
  Outcome o;
  const double gamma = 1.0;
  const Prototypes coincident{Matrix::Constant(4, 6, 0.3)};
  const double u1 = uniformity_loss(coincident, gamma);
  o.require(std::abs(u1 - 1.0) < 1e-12, "coincident uniformity " + fmt(u1));

  Matrix far(2, 3);
  far << 0, 0, 0, 50, 0, 0;
  const double u0 = uniformity_loss(Prototypes{far}, gamma);
  o.require(u0 < 1e-6, "separated uniformity " + fmt(u0));

  // Equidistant prototypes: the sample sits at the centroid of a regular simplex.
  const Index n_way = 5;
  Matrix decov_rows = Matrix::Zero(n_way, n_way);
  Matrix protos = Matrix::Identity(n_way, n_way);
  decov_rows.row(0).setConstant(1.0 / n_way);
  const std::vector<LabeledIndex> labeled{{0, 2}};
  const double ce = classification_loss(DecovMatrix{decov_rows, n_way}, Prototypes{protos}, labeled);
  o.require(std::abs(ce - std::log(static_cast<double>(n_way))) < 1e-10, "equidistant classification " + fmt(ce));

  Matrix dominant = Matrix::Zero(2, 2);
  Matrix dp(2, 2);
  dp << 0, 0, 100, 0;
  const double ce0 = classification_loss(DecovMatrix{dominant, 2}, Prototypes{dp}, std::vector<LabeledIndex>{{0, 0}});
  o.require(ce0 < 1e-6, "dominant classification " + fmt(ce0));
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("U(coincident)=") + fmt(u1) + ", U(far)=" + fmt(u0) +
              ", CE(equidistant)-ln5=" + fmt(ce - std::log(5.0));
  return o;
}

// --- 6, 7 ------------------------------------------------------------------

nlohmann::json blob_run(const std::string& name, double separation, const std::string& flags, int* rc) {
  const fs::path out = kWork / (name + ".json");
  *rc = run_cli("eval --blobs --blob-classes 5 --blob-dim 16 --blob-per-class 100 --separation " + fmt(separation) +
                " --noise 1 --blob-seed 0 -n 5 -k 1 -q 15 --episodes 500 --seed 0 " + flags + " --out \"" +
                out.string() + "\"");
  return *rc == 0 ? read_json(out) : nlohmann::json{};
}

Outcome blob_benchmark() {
  Outcome o;
  const auto t0 = Clock::now();
  int rc = 0;
  const auto full = blob_run("blobs_full", 10.0, "", &rc);
  o.require(rc == 0, "full run exit " + std::to_string(rc));
  const double secs = seconds_since(t0);
  const auto base = blob_run("blobs_baseline", 10.0, "--no-local --no-global --no-ummc", &rc);
  o.require(rc == 0, "baseline run exit " + std::to_string(rc));
  if (!o.pass) return o;
  const double acc = full["mean_accuracy"], base_acc = base["mean_accuracy"];
  o.require(acc >= 0.95, "accuracy " + fmt(acc));
  o.require(acc >= base_acc - 0.01, "below baseline " + fmt(base_acc));
  o.require(secs < 600.0, "took " + fmt(secs) + " s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("full ") + fmt(acc) + ", baseline " + fmt(base_acc) +
              ", " + fmt(secs) + " s";
  return o;
}

Outcome ablation_ordering() {
  Outcome o;
  int rc = 0;
  const auto full = blob_run("ablation_full", 3.0, "", &rc);
  o.require(rc == 0, "full run exit " + std::to_string(rc));
  if (!o.pass) return o;
  const double acc = full["mean_accuracy"];
  std::string summary = "full " + fmt(acc);
  for (const auto& [name, flag] : std::vector<std::pair<std::string, std::string>>{
           {"no_local", "--no-local"}, {"no_global", "--no-global"}, {"no_ummc", "--no-ummc"}}) {
    const auto j = blob_run("ablation_" + name, 3.0, flag, &rc);
    o.require(rc == 0, name + " exit " + std::to_string(rc));
    if (rc != 0) continue;
    const double a = j["mean_accuracy"], ci = j["ci95_halfwidth"];
    o.require(acc >= a - ci, name + " " + fmt(a) + " +- " + fmt(ci));
    summary += ", " + name + " " + fmt(a) + " +- " + fmt(ci);
  }
  o.detail += (o.detail.empty() ? "" : "; ") + summary;
  return o;
}

// --- 8 ---------------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  const std::string common =
      "eval --blobs --separation 4 --blob-seed 9 -n 5 -k 1 -q 15 --episodes 40 --seed 77 --opt-steps 60 ";
  std::vector<std::string> bodies;
  for (const int workers : {1, 4, 1}) {
    const fs::path out = kWork / ("determinism_w" + std::to_string(workers) + "_" + std::to_string(bodies.size()) + ".json");
    const int rc = run_cli(common + "--workers " + std::to_string(workers) + " --out \"" + out.string() + "\"");
    o.require(rc == 0, "workers=" + std::to_string(workers) + " exit " + std::to_string(rc));
    if (rc != 0) return o;
    auto j = read_json(out);
    j.erase("wall_time_seconds");
    bodies.push_back(j.dump());
  }
  o.require(bodies[0] == bodies[1], "workers 1 vs 4 differ");
  o.require(bodies[0] == bodies[2], "repeated run differs");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("3 runs byte-identical, workers 1/4/1");
  return o;
}

// --- 9 ---------------------------------------------------------------------

template <class F>
std::string format_error_name(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return to_string(e.code());
  } catch (const std::exception& e) {
    return std::string("other: ") + e.what();
  }
  return "none";
}

Outcome format_round_trip() {
  Outcome o;
  const fs::path gen = kWork / "roundtrip.umfe", again = kWork / "roundtrip_again.umfe";
  o.require(run_cli("gen-blobs --blob-classes 7 --blob-dim 11 --blob-per-class 13 --blob-seed 3 --out \"" +
                    gen.string() + "\"") == 0,
            "gen-blobs failed");
  if (!o.pass) return o;
  save_features(load_features(gen, FeatureFormat::umfe), again, FeatureFormat::umfe);
  const std::string a = slurp(gen), b = slurp(again);
  o.require(!a.empty() && a == b, "re-serialized payload differs");

  std::string bad = a;
  bad[1] = 'X';
  std::istringstream m1(bad, std::ios::binary);
  const std::string e1 = format_error_name([&] { read_umfe(m1); });
  o.require(e1 == "bad_magic", "bad magic -> " + e1);

  std::istringstream m2(a.substr(0, a.size() - 3), std::ios::binary);
  const std::string e2 = format_error_name([&] { read_umfe(m2); });
  o.require(e2 == "truncated", "truncation -> " + e2);

  std::istringstream m3("label,f0,f1,f2\n0,1,2,3\n1,4,5\n");
  const std::string e3 = format_error_name([&] { read_csv(m3); });
  o.require(e3 == "dimension_mismatch", "dimension mismatch -> " + e3);

  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(a.size()) + " bytes identical; " + e1 + ", " + e2 +
              ", " + e3;
  return o;
}

} // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 protocol on user feature files", protocol_on_user_file},
      {"2 centering identity", centering_identity},
      {"3 gradient check", gradient_check},
      {"4 sinkhorn correctness", sinkhorn_correctness},
      {"5 loss limit cases", loss_limits},
      {"6 blob benchmark", blob_benchmark},
      {"7 ablation ordering", ablation_ordering},
      {"8 determinism", determinism},
      {"9 format round trip", format_round_trip},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail << ")" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
