#include "ummec/harness.hpp"

#include "ummec/errors.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

namespace ummec {

void RunConfig::validate() const {
  if (n_way < 1 || k_shot < 1 || q_queries < 1) throw InvalidInput("N, K and Q must be >= 1");
  if (episodes < 1) throw InvalidInput("episode count must be >= 1");
  if (workers < 1) throw InvalidInput("worker count must be >= 1");
  loss.validate();
  optim.validate();
  sinkhorn.validate();
  if (!data.path) data.blobs.validate();
}

EpisodeReport run_episode_detailed(const FeatureSet& fs, const Episode& ep, const RunConfig& config) {
  const EpisodeLabels labels = episode_labels(ep);
  EpisodeReport report;
  report.z = init_embeddings(episode_features(fs, ep)).z;

  const LossTerms terms{config.ablation.use_local, config.ablation.use_global};
  if (terms.any()) {
    OptimResult opt = optimize_episode({report.z}, labels, config.loss, config.optim, terms);
    report.z = std::move(opt.state.z);
    report.loss_trace = std::move(opt.trace);
  }

  ClassCenters centers = init_centers(report.z, labels.labeled, ep.n_way);
  const Index n_support = static_cast<Index>(ep.support.size());
  const Index n_query = static_cast<Index>(ep.query.size());
  if (config.ablation.use_ummc) {
    VariationalResult vs = variational_sinkhorn(report.z, centers, config.sinkhorn,
                                                uniform_marginal(ep.size()), uniform_marginal(ep.n_way));
    centers = std::move(vs.centers);
    report.sinkhorn_stats = std::move(vs.stats);
    std::vector<Index> rows(static_cast<std::size_t>(n_query));
    std::iota(rows.begin(), rows.end(), n_support);
    const auto by_plan = classify_by_plan(vs.plan, rows);
    report.predictions = classify_queries(report.z.bottomRows(n_query), centers);
    Index agree = 0;
    for (std::size_t q = 0; q < by_plan.size(); ++q) agree += by_plan[q] == report.predictions[q];
    report.plan_agreement = n_query > 0 ? static_cast<double>(agree) / static_cast<double>(n_query) : 1.0;
  } else {
    report.predictions = classify_queries(report.z.bottomRows(n_query), centers);
  }
  for (const bool d : centers.degenerate) report.degenerate_center = report.degenerate_center || d;

  Index correct = 0;
  for (std::size_t q = 0; q < ep.query.size(); ++q) correct += report.predictions[q] == ep.query[q].cls;
  report.accuracy = n_query > 0 ? static_cast<double>(correct) / static_cast<double>(n_query) : 0.0;
  return report;
}

EpisodeOutcome run_episode(const FeatureSet& fs, const Episode& ep, const RunConfig& config) {
  EpisodeOutcome out;
  try {
    const EpisodeReport report = run_episode_detailed(fs, ep, config);
    out.accuracy = report.accuracy;
    out.plan_agreement = report.plan_agreement;
    if (!report.loss_trace.empty()) {
      out.initial_loss = report.loss_trace.front().total;
      out.final_loss = report.loss_trace.back().total;
    }
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

std::uint64_t episode_seed(std::uint64_t master_seed, Index i) noexcept {
  return master_seed + static_cast<std::uint64_t>(i);
}

FeatureSet load_data(const DataSource& source) {
  if (source.path) return load_features(*source.path, source.format);
  return gaussian_blobs(source.blobs);
}

double ci95_halfwidth(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

RunResult run_eval(const FeatureSet& fs, const RunConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  // Surface shape errors once, before any worker starts.
  (void)sample_episode(fs, config.n_way, config.k_shot, config.q_queries, config.seed);

  RunResult result;
  result.episodes = config.episodes;
  result.outcomes.resize(static_cast<std::size_t>(config.episodes));

  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index i = next++; i < config.episodes; i = next++) {
      RunConfig local = config;
      local.optim.seed = episode_seed(config.seed, i);
      const Episode ep = sample_episode(fs, config.n_way, config.k_shot, config.q_queries, local.optim.seed);
      result.outcomes[static_cast<std::size_t>(i)] = run_episode(fs, ep, local);
    }
  };
  const unsigned n_workers =
      static_cast<unsigned>(std::min<Index>(config.workers, config.episodes));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  for (const auto& o : result.outcomes) {
    if (o.failed) ++result.failed_episodes;
    else result.per_episode_accuracies.push_back(o.accuracy);
  }
  const auto& acc = result.per_episode_accuracies;
  if (!acc.empty())
    result.mean_accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  result.ci95_halfwidth = ci95_halfwidth(acc);
  result.healthy = static_cast<double>(result.failed_episodes) <= 0.01 * static_cast<double>(config.episodes);
  result.config_echo = to_json(config);
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RunResult run_eval(const RunConfig& config) {
  config.validate();
  return run_eval(load_data(config.data), config);
}

nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json data;
  if (c.data.path) {
    data = {{"path", c.data.path->string()},
            {"format", c.data.format == FeatureFormat::csv ? "csv" : "umfe"}};
  } else {
    const auto& b = c.data.blobs;
    data = {{"blobs",
             {{"n_classes", b.n_classes},
              {"dim", b.dim},
              {"samples_per_class", b.samples_per_class},
              {"separation", b.separation},
              {"noise_sigma", b.noise_sigma},
              {"seed", b.seed}}}};
  }
  // Worker count and output locations do not affect results and are left
  // out so that equivalent runs echo identically.
  return {
      {"data", data},
      {"n_way", c.n_way},
      {"k_shot", c.k_shot},
      {"q_queries", c.q_queries},
      {"episodes", c.episodes},
      {"seed", c.seed},
      {"ablation",
       {{"use_local", c.ablation.use_local},
        {"use_global", c.ablation.use_global},
        {"use_ummc", c.ablation.use_ummc}}},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"eta", c.loss.eta},
        {"gamma", c.loss.gamma},
        {"lambda_w", c.loss.lambda_w},
        {"mu", c.loss.mu},
        {"pair_scope", c.loss.pair_scope == PairScope::all_pairs ? "all_pairs" : "same_class_pairs"},
        {"norm_factor", c.loss.norm_factor}}},
      {"optim",
       {{"steps", c.optim.steps},
        {"learning_rate", c.optim.learning_rate},
        {"adam_beta1", c.optim.adam_beta1},
        {"adam_beta2", c.optim.adam_beta2},
        {"adam_eps", c.optim.adam_eps},
        {"learn_mu", c.optim.learn_mu}}},
      {"sinkhorn",
       {{"lambda_ot", c.sinkhorn.lambda_ot},
        {"step_size", c.sinkhorn.step_size},
        {"outer_iters", c.sinkhorn.outer_iters},
        {"inner_tol", c.sinkhorn.inner_tol},
        {"inner_max_iters", c.sinkhorn.inner_max_iters}}},
  };
}

nlohmann::json to_json(const RunResult& r) {
  return {
      {"mean_accuracy", r.mean_accuracy},
      {"ci95_halfwidth", r.ci95_halfwidth},
      {"episodes", r.episodes},
      {"failed_episodes", r.failed_episodes},
      {"healthy", r.healthy},
      {"wall_time_seconds", r.wall_time_seconds},
      {"config", r.config_echo},
  };
}

void write_per_episode_csv(std::ostream& os, const RunResult& result) {
  const auto old_prec = os.precision(17);
  os << "episode,status,accuracy,initial_loss,final_loss,plan_agreement,error\n";
  for (std::size_t i = 0; i < result.outcomes.size(); ++i) {
    const auto& o = result.outcomes[i];
    std::string err = o.error;
    for (auto& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    os << i << ',' << (o.failed ? "failed" : "ok") << ',' << o.accuracy << ',' << o.initial_loss << ','
       << o.final_loss << ',' << o.plan_agreement << ',' << err << '\n';
  }
  os.precision(old_prec);
}

void dump_embeddings(const Matrix& z, const Episode& ep, std::ostream& os) {
  if (z.rows() != ep.size()) throw InvalidInput("dump_embeddings: row count does not match the episode");
  const auto old_prec = os.precision(9);
  os << "sample_id,set,true_class";
  for (Index j = 0; j < z.cols(); ++j) os << ",z" << j;
  os << '\n';
  Index r = 0;
  auto emit = [&](const EpisodeSample& s, const char* set) {
    os << s.row << ',' << set << ',' << s.cls;
    for (Index j = 0; j < z.cols(); ++j) os << ',' << static_cast<float>(z(r, j));
    os << '\n';
    ++r;
  };
  for (const auto& s : ep.support) emit(s, "support");
  for (const auto& s : ep.query) emit(s, "query");
  os.precision(old_prec);
}

void dump_embeddings(const Matrix& z, const Episode& ep, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  dump_embeddings(z, ep, os);
  if (!os) throw IoError("failed writing " + path.string());
}

} // namespace ummec
