#pragma once

// Episodic evaluation: runs the embedding optimization and the transport
// classifier over many sampled episodes and aggregates accuracy.

#include "ummec/episodes.hpp"
#include "ummec/losses.hpp"
#include "ummec/optimizer.hpp"
#include "ummec/sinkhorn.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ummec {

struct AblationFlags {
  bool use_local = true;
  bool use_global = true;
  bool use_ummc = true;
};

struct DataSource {
  std::optional<std::filesystem::path> path;
  FeatureFormat format = FeatureFormat::umfe;
  BlobSpec blobs; ///< used when path is empty
};

struct RunConfig {
  DataSource data;
  Index n_way = 5;
  Index k_shot = 1;
  Index q_queries = 15;
  Index episodes = 1000;
  LossParams loss;
  OptimConfig optim;
  SinkhornConfig sinkhorn;
  AblationFlags ablation;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> per_episode_csv;

  void validate() const;
};

/// Everything one episode produced, for diagnostics and embedding dumps.
struct EpisodeReport {
  double accuracy = 0.0;
  Matrix z; ///< final embeddings, support rows first
  std::vector<Index> predictions;
  std::vector<LossValue> loss_trace; ///< empty when optimization was skipped
  std::vector<OuterIterationStats> sinkhorn_stats;
  double plan_agreement = 1.0; ///< share of queries where plan argmax and nearest center agree
  bool degenerate_center = false;
};

EpisodeReport run_episode_detailed(const FeatureSet& fs, const Episode& ep, const RunConfig& config);

struct EpisodeOutcome {
  double accuracy = 0.0;
  bool failed = false;
  std::string error;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double plan_agreement = 1.0;
};

/// Never throws for numerical failures inside the episode; they are
/// reported through `failed`.
EpisodeOutcome run_episode(const FeatureSet& fs, const Episode& ep, const RunConfig& config);

struct RunResult {
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;
  Index episodes = 0;
  Index failed_episodes = 0;
  bool healthy = true;
  double wall_time_seconds = 0.0;
  std::vector<double> per_episode_accuracies; ///< successful episodes, in episode order
  std::vector<EpisodeOutcome> outcomes;       ///< every episode, in episode order
  nlohmann::json config_echo;
};

/// Seed of episode i: master_seed + i.
std::uint64_t episode_seed(std::uint64_t master_seed, Index i) noexcept;

FeatureSet load_data(const DataSource& source);

RunResult run_eval(const FeatureSet& fs, const RunConfig& config);
RunResult run_eval(const RunConfig& config);

/// 1.96 * sample stddev / sqrt(count); zero for fewer than two values.
double ci95_halfwidth(const std::vector<double>& values);

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const RunResult& result);

void write_per_episode_csv(std::ostream& os, const RunResult& result);

/// CSV `sample_id,set,true_class,z0..z{d-1}` with sample_id the feature
/// set row, support rows first.
void dump_embeddings(const Matrix& z, const Episode& ep, const std::filesystem::path& path);
void dump_embeddings(const Matrix& z, const Episode& ep, std::ostream& os);

struct GradcheckOptions {
  int instances = 10;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-4;
};

struct GradcheckInstance {
  Index n = 0;
  Index d = 0;
  PairScope scope = PairScope::all_pairs;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckInstance> instances;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares the analytic gradient of the combined loss against central
/// differences on random 5-way instances with n <= 12, d <= 5.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

} // namespace ummec
