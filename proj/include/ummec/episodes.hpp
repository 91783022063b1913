#pragma once

#include "ummec/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

namespace ummec {

/// Labeled feature vectors, immutable once built.
struct FeatureSet {
  Matrix features; ///< n_total x d
  std::vector<std::uint32_t> labels;
  std::map<std::uint32_t, std::vector<Index>> class_index;

  /// Validates finiteness and shape, and builds class_index.
  static FeatureSet build(Matrix features, std::vector<std::uint32_t> labels);

  Index size() const noexcept { return features.rows(); }
  Index dim() const noexcept { return features.cols(); }
};

enum class FeatureFormat { csv, umfe };

FeatureFormat parse_format(const std::string& name);

FeatureSet read_csv(std::istream& is);
void write_csv(std::ostream& os, const FeatureSet& fs);

/// Little-endian binary layout: "UMFE", u16 version (1), u32 n_total,
/// u32 d, n_total*d f32 row-major features, n_total u32 labels.
FeatureSet read_umfe(std::istream& is);
void write_umfe(std::ostream& os, const FeatureSet& fs);

FeatureSet load_features(const std::filesystem::path& path, FeatureFormat format);
void save_features(const FeatureSet& fs, const std::filesystem::path& path, FeatureFormat format);

struct EpisodeSample {
  Index row = 0; ///< row in the FeatureSet
  Index cls = 0; ///< episode-local class, 0..N-1
};

/// One N-way K-shot task. Episode classes are numbered by ascending
/// original class id; class_ids[k] is the original id of class k.
struct Episode {
  Index n_way = 0;
  Index k_shot = 0;
  Index q_queries = 0;
  std::vector<std::uint32_t> class_ids;
  std::vector<EpisodeSample> support;
  std::vector<EpisodeSample> query; ///< cls is the hidden ground truth

  Index size() const noexcept { return static_cast<Index>(support.size() + query.size()); }
};

Episode sample_episode(const FeatureSet& fs, Index n_way, Index k_shot, Index q_queries,
                       std::uint64_t seed);

/// Episode rows stacked support first, then queries.
Matrix episode_features(const FeatureSet& fs, const Episode& ep);

/// Labels visible during transduction: the support block only.
EpisodeLabels episode_labels(const Episode& ep);

struct BlobSpec {
  Index n_classes = 5;
  Index dim = 16;
  Index samples_per_class = 100;
  double separation = 10.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Expected distance between two independent uniform points on the unit
/// sphere in R^dim.
double mean_sphere_chord(Index dim);

/// Isotropic Gaussian classes whose means sit on a sphere of radius
/// separation / mean_sphere_chord(dim). Class ids are 0..n_classes-1.
FeatureSet gaussian_blobs(const BlobSpec& spec);

/// Class means used by gaussian_blobs for `spec` (row k is class k).
Matrix blob_means(const BlobSpec& spec);

} // namespace ummec
