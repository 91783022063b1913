// Command line front end: eval, gen-blobs, gradcheck, dump-embeddings.

#include "ummec/errors.hpp"
#include "ummec/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

namespace {

using namespace ummec;

struct DataFlags {
  std::string path;
  bool blobs = false;
  std::string format = "umfe";
  BlobSpec spec;
};

void add_blob_flags(CLI::App* app, BlobSpec& spec) {
  app->add_option("--blob-classes", spec.n_classes, "number of blob classes")->capture_default_str();
  app->add_option("--blob-dim", spec.dim, "feature dimension")->capture_default_str();
  app->add_option("--blob-per-class", spec.samples_per_class, "samples per class")->capture_default_str();
  app->add_option("--separation", spec.separation, "mean pairwise distance of class means")->capture_default_str();
  app->add_option("--noise", spec.noise_sigma, "isotropic noise standard deviation")->capture_default_str();
  app->add_option("--blob-seed", spec.seed, "generator seed")->capture_default_str();
}

void add_data_flags(CLI::App* app, DataFlags& data) {
  auto* path = app->add_option("--data", data.path, "feature file");
  auto* blobs = app->add_flag("--blobs", data.blobs, "use synthetic Gaussian blobs");
  path->excludes(blobs);
  app->add_option("--format", data.format, "feature file format")
      ->check(CLI::IsMember({"csv", "umfe"}))
      ->capture_default_str();
  add_blob_flags(app, data.spec);
}

DataSource to_source(const DataFlags& flags) {
  DataSource src;
  if (!flags.path.empty()) {
    src.path = flags.path;
    src.format = parse_format(flags.format);
  } else if (!flags.blobs) {
    throw InvalidInput("either --data PATH or --blobs is required");
  }
  src.blobs = flags.spec;
  return src;
}

void add_model_flags(CLI::App* app, RunConfig& cfg, std::string& scope) {
  app->add_option("-n,--n", cfg.n_way, "classes per episode")->capture_default_str();
  app->add_option("-k,--k", cfg.k_shot, "support samples per class")->capture_default_str();
  app->add_option("-q,--q", cfg.q_queries, "queries per class")->capture_default_str();
  app->add_flag("--no-local", [&cfg](std::int64_t) { cfg.ablation.use_local = false; }, "drop the local loss");
  app->add_flag("--no-global", [&cfg](std::int64_t) { cfg.ablation.use_global = false; }, "drop the global loss");
  app->add_flag("--no-ummc", [&cfg](std::int64_t) { cfg.ablation.use_ummc = false; },
                "classify by nearest initial prototype instead of transport refinement");
  app->add_option("--alpha", cfg.loss.alpha)->capture_default_str();
  app->add_option("--eta", cfg.loss.eta)->capture_default_str();
  app->add_option("--gamma", cfg.loss.gamma)->capture_default_str();
  app->add_option("--lambda-w", cfg.loss.lambda_w)->capture_default_str();
  app->add_option("--mu", cfg.loss.mu)->capture_default_str();
  app->add_option("--pair-scope", scope)
      ->check(CLI::IsMember({"all", "same-class"}))
      ->capture_default_str();
  app->add_option("--norm-factor", cfg.loss.norm_factor, "centering divisor, 0 = episode size")
      ->capture_default_str();
  app->add_flag("--learn-mu", cfg.optim.learn_mu, "optimize mu with the embeddings");
  app->add_option("--lambda-ot", cfg.sinkhorn.lambda_ot)->capture_default_str();
  app->add_option("--step-size", cfg.sinkhorn.step_size)->capture_default_str();
  app->add_option("--outer-iters", cfg.sinkhorn.outer_iters)->capture_default_str();
  app->add_option("--inner-tol", cfg.sinkhorn.inner_tol)->capture_default_str();
  app->add_option("--inner-max-iters", cfg.sinkhorn.inner_max_iters)->capture_default_str();
  app->add_option("--opt-steps", cfg.optim.steps)->capture_default_str();
  app->add_option("--lr", cfg.optim.learning_rate)->capture_default_str();
}

void apply_scope(RunConfig& cfg, const std::string& scope) {
  cfg.loss.pair_scope = scope == "same-class" ? PairScope::same_class_pairs : PairScope::all_pairs;
}

int cmd_eval(RunConfig cfg, const DataFlags& data, const std::string& scope, const std::string& out,
             const std::string& per_episode) {
  cfg.data = to_source(data);
  apply_scope(cfg, scope);
  if (!out.empty()) cfg.out = out;
  if (!per_episode.empty()) cfg.per_episode_csv = per_episode;

  const RunResult result = run_eval(cfg);
  const std::string doc = to_json(result).dump(2) + "\n";
  if (cfg.out) {
    std::ofstream os(*cfg.out);
    if (!os) throw IoError("cannot open " + cfg.out->string());
    os << doc;
  } else {
    std::cout << doc;
  }
  if (cfg.per_episode_csv) {
    std::ofstream os(*cfg.per_episode_csv);
    if (!os) throw IoError("cannot open " + cfg.per_episode_csv->string());
    write_per_episode_csv(os, result);
  }
  std::cerr << "mean accuracy " << result.mean_accuracy << " +- " << result.ci95_halfwidth << " over "
            << result.per_episode_accuracies.size() << " episodes";
  if (result.failed_episodes > 0) std::cerr << " (" << result.failed_episodes << " failed)";
  std::cerr << '\n';
  return result.healthy ? 0 : 3;
}

int cmd_gradcheck(const GradcheckOptions& opts) {
  const GradcheckReport report = run_gradcheck(opts);
  for (std::size_t i = 0; i < report.instances.size(); ++i) {
    const auto& inst = report.instances[i];
    std::cout << "instance " << i << " n=" << inst.n << " d=" << inst.d << " scope="
              << (inst.scope == PairScope::all_pairs ? "all" : "same-class")
              << " max_rel_error=" << inst.max_rel_error << '\n';
  }
  std::cout << (report.passed ? "PASS" : "FAIL") << " max_rel_error=" << report.max_rel_error
            << " tolerance=" << opts.tolerance << '\n';
  return report.passed ? 0 : 1;
}

int cmd_dump(RunConfig cfg, const DataFlags& data, const std::string& scope, std::uint64_t episode,
             const std::string& out, const std::string& trace, const std::string& ot_trace) {
  cfg.data = to_source(data);
  apply_scope(cfg, scope);
  cfg.episodes = 1;
  cfg.validate();
  const FeatureSet fs = load_data(cfg.data);
  const Episode ep = sample_episode(fs, cfg.n_way, cfg.k_shot, cfg.q_queries, episode);
  cfg.optim.seed = episode;
  const EpisodeReport report = run_episode_detailed(fs, ep, cfg);
  dump_embeddings(report.z, ep, std::filesystem::path(out));
  if (!trace.empty()) {
    std::ofstream os(trace);
    if (!os) throw IoError("cannot open " + trace);
    write_trace_csv(os, report.loss_trace);
  }
  if (!ot_trace.empty()) {
    std::ofstream os(ot_trace);
    if (!os) throw IoError("cannot open " + ot_trace);
    write_sinkhorn_stats_csv(os, report.sinkhorn_stats);
  }
  std::cerr << "episode accuracy " << report.accuracy << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transductive few-shot evaluation with decentralized-covariance embeddings and "
               "Sinkhorn center refinement"};
  app.require_subcommand(1);

  RunConfig eval_cfg;
  DataFlags eval_data;
  std::string eval_scope = "all";
  std::string eval_out, eval_per_episode;
  auto* eval = app.add_subcommand("eval", "run the episodic benchmark");
  add_data_flags(eval, eval_data);
  add_model_flags(eval, eval_cfg, eval_scope);
  eval->add_option("--episodes", eval_cfg.episodes)->capture_default_str();
  eval->add_option("--seed", eval_cfg.seed, "master seed; episode i uses seed + i")->capture_default_str();
  eval->add_option("--workers", eval_cfg.workers)->capture_default_str();
  eval->add_option("--out", eval_out, "JSON result path (stdout if omitted)");
  eval->add_option("--per-episode", eval_per_episode, "per-episode CSV path");

  BlobSpec gen_spec;
  std::string gen_out, gen_format = "umfe";
  auto* gen = app.add_subcommand("gen-blobs", "write a synthetic Gaussian blob feature file");
  add_blob_flags(gen, gen_spec);
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--format", gen_format)->check(CLI::IsMember({"csv", "umfe"}))->capture_default_str();

  GradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  grad->add_option("--instances", gc.instances)->capture_default_str();
  grad->add_option("--seed", gc.seed)->capture_default_str();
  grad->add_option("--fd-step", gc.h, "Central difference step")->capture_default_str();
  grad->add_option("--tol", gc.tolerance)->capture_default_str();

  RunConfig dump_cfg;
  DataFlags dump_data;
  std::string dump_scope = "all";
  std::uint64_t dump_seed = 0;
  std::string dump_out, dump_trace, dump_ot;
  auto* dump = app.add_subcommand("dump-embeddings", "write one episode's optimized embeddings as CSV");
  add_data_flags(dump, dump_data);
  add_model_flags(dump, dump_cfg, dump_scope);
  dump->add_option("--seed", dump_seed, "episode seed")->capture_default_str();
  dump->add_option("--out", dump_out, "embedding CSV path")->required();
  dump->add_option("--trace", dump_trace, "per-step loss CSV path");
  dump->add_option("--sinkhorn-trace", dump_ot, "per-iteration transport diagnostics CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) return cmd_eval(eval_cfg, eval_data, eval_scope, eval_out, eval_per_episode);
    if (*gen) {
      save_features(gaussian_blobs(gen_spec), gen_out, parse_format(gen_format));
      return 0;
    }
    if (*grad) return cmd_gradcheck(gc);
    if (*dump) return cmd_dump(dump_cfg, dump_data, dump_scope, dump_seed, dump_out, dump_trace, dump_ot);
  } catch (const ummec::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
