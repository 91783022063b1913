#include "ummec/episodes.hpp"

#include "ummec/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace ummec {

FeatureSet FeatureSet::build(Matrix features, std::vector<std::uint32_t> labels) {
  if (static_cast<Index>(labels.size()) != features.rows())
    throw InvalidInput("feature set has " + std::to_string(features.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
  if (features.rows() > 0 && features.cols() < 1) throw InvalidInput("feature dimension must be >= 1");
  if (!features.allFinite()) throw FormatError(FormatErrc::non_finite, "feature set contains NaN or Inf");
  FeatureSet fs;
  fs.features = std::move(features);
  fs.labels = std::move(labels);
  for (Index i = 0; i < fs.features.rows(); ++i) fs.class_index[fs.labels[static_cast<std::size_t>(i)]].push_back(i);
  return fs;
}

FeatureFormat parse_format(const std::string& name) {
  if (name == "csv") return FeatureFormat::csv;
  if (name == "umfe") return FeatureFormat::umfe;
  throw InvalidInput("unknown feature format '" + name + "' (expected csv or umfe)");
}

// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

} // namespace

FeatureSet read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(FormatErrc::malformed_header, "empty file", 1);
  const auto header = split_commas(trim(line));
  if (header.size() < 2 || trim(header[0]) != "label")
    throw FormatError(FormatErrc::malformed_header, "expected 'label,f0,...'", 1);
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (trim(header[j]) != "f" + std::to_string(j - 1))
      throw FormatError(FormatErrc::malformed_header,
                        "column " + std::to_string(j) + " should be f" + std::to_string(j - 1), 1);
  }
  const auto d = static_cast<Index>(header.size() - 1);

  std::vector<double> values;
  std::vector<std::uint32_t> labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_commas(body);
    if (static_cast<Index>(fields.size()) != d + 1)
      throw FormatError(FormatErrc::dimension_mismatch,
                        "expected " + std::to_string(d) + " features, found " +
                            std::to_string(fields.size() - 1),
                        line_no);
    const auto lbl = trim(fields[0]);
    std::uint32_t label = 0;
    auto [lp, lec] = std::from_chars(lbl.data(), lbl.data() + lbl.size(), label, 10);
    if (lec != std::errc() || lp != lbl.data() + lbl.size() || lbl.empty())
      throw FormatError(FormatErrc::bad_value, "label '" + std::string(lbl) + "' is not an unsigned integer", line_no);
    labels.push_back(label);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto f = trim(fields[j]);
      double v = 0.0;
      auto [fp, fec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (fec != std::errc() || fp != f.data() + f.size() || f.empty())
        throw FormatError(FormatErrc::bad_value, "feature '" + std::string(f) + "' is not a number", line_no);
      if (!std::isfinite(v))
        throw FormatError(FormatErrc::non_finite, "feature f" + std::to_string(j - 1) + " is not finite", line_no);
      values.push_back(v);
    }
  }
  const auto n = static_cast<Index>(labels.size());
  Matrix features(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) features(i, j) = values[static_cast<std::size_t>(i * d + j)];
  }
  return FeatureSet::build(std::move(features), std::move(labels));
}

void write_csv(std::ostream& os, const FeatureSet& fs) {
  os << "label";
  for (Index j = 0; j < fs.dim(); ++j) os << ",f" << j;
  os << '\n';
  std::array<char, 64> buf{};
  for (Index i = 0; i < fs.size(); ++i) {
    os << fs.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < fs.dim(); ++j) {
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), fs.features(i, j));
      os << ',' << std::string_view(buf.data(), static_cast<std::size_t>(res.ptr - buf.data()));
    }
    os << '\n';
  }
}

// UMFE

namespace {

constexpr std::array<char, 4> kMagic{'U', 'M', 'F', 'E'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t b = 0; b < sizeof(T); ++b) bytes[b] = static_cast<char>((value >> (8 * b)) & 0xFFu);
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw FormatError(FormatErrc::truncated, std::string("payload ends inside ") + what);
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(static_cast<T>(bytes[b]) << (8 * b));
  return value;
}

} // namespace

FeatureSet read_umfe(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != static_cast<std::streamsize>(magic.size()))
    throw FormatError(FormatErrc::truncated, "payload shorter than the magic bytes");
  if (magic != kMagic) throw FormatError(FormatErrc::bad_magic, "expected 'UMFE'");
  const auto version = get_le<std::uint16_t>(is, "version");
  if (version != kVersion)
    throw FormatError(FormatErrc::unsupported_version, "version " + std::to_string(version));
  const auto n = get_le<std::uint32_t>(is, "n_total");
  const auto d = get_le<std::uint32_t>(is, "d");
  if (n > 0 && d == 0) throw FormatError(FormatErrc::dimension_mismatch, "d must be >= 1");

  Matrix features(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index j = 0; j < features.cols(); ++j) {
      const auto bits = get_le<std::uint32_t>(is, "features");
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v))
        throw FormatError(FormatErrc::non_finite, "feature (" + std::to_string(i) + "," + std::to_string(j) + ")");
      features(i, j) = static_cast<double>(v);
    }
  }
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = get_le<std::uint32_t>(is, "labels");
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError(FormatErrc::trailing_data, "bytes after the label block");
  return FeatureSet::build(std::move(features), std::move(labels));
}

void write_umfe(std::ostream& os, const FeatureSet& fs) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(fs.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(fs.dim()));
  for (Index i = 0; i < fs.size(); ++i) {
    for (Index j = 0; j < fs.dim(); ++j)
      put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(fs.features(i, j))));
  }
  for (const auto l : fs.labels) put_le<std::uint32_t>(os, l);
}

FeatureSet load_features(const std::filesystem::path& path, FeatureFormat format) {
  std::ifstream is(path, format == FeatureFormat::umfe ? std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open " + path.string());
  return format == FeatureFormat::umfe ? read_umfe(is) : read_csv(is);
}

void save_features(const FeatureSet& fs, const std::filesystem::path& path, FeatureFormat format) {
  std::ofstream os(path, format == FeatureFormat::umfe ? std::ios::binary : std::ios::out);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  if (format == FeatureFormat::umfe) write_umfe(os, fs);
  else write_csv(os, fs);
  if (!os) throw IoError("failed writing " + path.string());
}

// Episodes

Episode sample_episode(const FeatureSet& fs, Index n_way, Index k_shot, Index q_queries,
                       std::uint64_t seed) {
  if (n_way < 1 || k_shot < 1 || q_queries < 0)
    throw InvalidRequest("episode shape needs N >= 1, K >= 1, Q >= 0");
  const Index per_class = k_shot + q_queries;
  std::vector<std::uint32_t> eligible;
  for (const auto& [id, rows] : fs.class_index) {
    if (static_cast<Index>(rows.size()) >= per_class) eligible.push_back(id);
  }
  if (static_cast<Index>(eligible.size()) < n_way)
    throw InvalidRequest("need " + std::to_string(n_way) + " classes with at least " +
                         std::to_string(per_class) + " samples, only " +
                         std::to_string(eligible.size()) + " available (short by " +
                         std::to_string(n_way - static_cast<Index>(eligible.size())) + ")");

  std::mt19937_64 rng(seed);
  auto partial_shuffle = [&rng](auto& v, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
      std::swap(v[i], v[pick(rng)]);
    }
  };

  partial_shuffle(eligible, static_cast<std::size_t>(n_way));
  eligible.resize(static_cast<std::size_t>(n_way));
  std::sort(eligible.begin(), eligible.end());

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_queries = q_queries;
  ep.class_ids = eligible;
  for (Index k = 0; k < n_way; ++k) {
    auto rows = fs.class_index.at(eligible[static_cast<std::size_t>(k)]);
    partial_shuffle(rows, static_cast<std::size_t>(per_class));
    for (Index s = 0; s < per_class; ++s) {
      const EpisodeSample sample{rows[static_cast<std::size_t>(s)], k};
      (s < k_shot ? ep.support : ep.query).push_back(sample);
    }
  }
  return ep;
}

Matrix episode_features(const FeatureSet& fs, const Episode& ep) {
  Matrix x(ep.size(), fs.dim());
  Index r = 0;
  for (const auto& s : ep.support) x.row(r++) = fs.features.row(s.row);
  for (const auto& s : ep.query) x.row(r++) = fs.features.row(s.row);
  return x;
}

EpisodeLabels episode_labels(const Episode& ep) {
  std::vector<LabeledIndex> labeled;
  labeled.reserve(ep.support.size());
  for (std::size_t i = 0; i < ep.support.size(); ++i)
    labeled.push_back({static_cast<Index>(i), ep.support[i].cls});
  return EpisodeLabels::from_labeled(ep.size(), ep.n_way, std::move(labeled));
}

// Blobs

void BlobSpec::validate() const {
  if (n_classes < 1 || dim < 1 || samples_per_class < 1)
    throw InvalidInput("blob spec counts must be positive");
  if (!(separation > 0.0) || !std::isfinite(separation)) throw InvalidInput("separation must be positive");
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw InvalidInput("noise_sigma must be positive");
}

double mean_sphere_chord(Index dim) {
  if (dim < 1) throw InvalidInput("dimension must be >= 1");
  if (dim == 1) return 1.0; // {-1, +1}: distance 0 or 2 with equal odds
  // The angle between two uniform directions has density proportional to
  // sin^(dim-2), and the chord at angle t is 2 sin(t/2).
  constexpr int intervals = 4096;
  const double h = std::numbers::pi / intervals;
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double t = i * h;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const double dens = dim == 2 ? 1.0 : std::pow(std::sin(t), static_cast<double>(dim - 2));
    num += w * 2.0 * std::sin(0.5 * t) * dens;
    den += w * dens;
  }
  return num / den;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

} // namespace

Matrix blob_means(const BlobSpec& spec) {
  spec.validate();
  auto rng = stream(spec.seed, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double radius = spec.separation / mean_sphere_chord(spec.dim);
  Matrix means(spec.n_classes, spec.dim);
  for (Index k = 0; k < spec.n_classes; ++k) {
    double nrm = 0.0;
    while (nrm < 1e-12) {
      for (Index j = 0; j < spec.dim; ++j) means(k, j) = gauss(rng);
      nrm = means.row(k).norm();
    }
    means.row(k) *= radius / nrm;
  }
  return means;
}

FeatureSet gaussian_blobs(const BlobSpec& spec) {
  const Matrix means = blob_means(spec);
  auto rng = stream(spec.seed, 1);
  std::normal_distribution<double> gauss(0.0, spec.noise_sigma);
  const Index n = spec.n_classes * spec.samples_per_class;
  Matrix x(n, spec.dim);
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
  for (Index k = 0; k < spec.n_classes; ++k) {
    for (Index s = 0; s < spec.samples_per_class; ++s) {
      const Index i = k * spec.samples_per_class + s;
      // Stored at f32 precision so that a UMFE round trip is lossless.
      for (Index j = 0; j < spec.dim; ++j)
        x(i, j) = static_cast<double>(static_cast<float>(means(k, j) + gauss(rng)));
      labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
    }
  }
  return FeatureSet::build(std::move(x), std::move(labels));
}

} // namespace ummec
