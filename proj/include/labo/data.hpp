#pragma once

// Datasets: synthetic Gaussian blobs, IDX (MNIST-style) files, numeric CSV.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "labo/io.hpp"

namespace labo {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // N x dim, row-major
  std::vector<std::size_t> labels;
  Splits splits;
  /// Column names for CSV-backed data (features only); empty otherwise.
  std::vector<std::string> feature_names;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  /// Checks label range and split disjointness; throws std::invalid_argument.
  void validate() const {
    if (features.size() != labels.size() * dim) throw std::invalid_argument("Dataset: shape mismatch");
    for (auto y : labels) {
      if (y >= num_classes) throw std::invalid_argument("Dataset: label out of range");
    }
    std::vector<bool> seen(size(), false);
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
      for (auto i : *part) {
        if (i >= size()) throw std::invalid_argument("Dataset: split index out of range");
        if (seen[i]) throw std::invalid_argument("Dataset: split index appears twice");
        seen[i] = true;
      }
    }
  }
};

/// Per-class shuffled 80/10/10 split (train/val/test), deterministic in `seed`.
inline Splits stratified_split(std::span<const std::size_t> labels, std::size_t num_classes,
                               std::uint64_t seed, double train_frac = 0.8, double val_frac = 0.1) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  Splits s;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
    for (std::size_t r = 0; r < n; ++r) {
      if (r < n_train) {
        s.train.push_back(idx[r]);
      } else if (r < n_train + n_val) {
        s.val.push_back(idx[r]);
      } else {
        s.test.push_back(idx[r]);
      }
    }
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

/// K isotropic Gaussian clusters with means evenly spaced on a circle of
/// radius 2 in the first two coordinates.
inline Dataset gaussian_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                              double stddev, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("gaussian_blobs: need K >= 2");
  if (dim < 2) throw std::invalid_argument("gaussian_blobs: need dim >= 2");
  if (!(stddev > 0.0)) throw std::invalid_argument("gaussian_blobs: std must be > 0");
  Dataset d;
  d.dim = dim;
  d.num_classes = num_classes;
  d.features.reserve(num_classes * per_class * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                         static_cast<double>(num_classes);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        double mean = 0.0;
        if (k == 0) mean = 2.0 * std::cos(angle);
        if (k == 1) mean = 2.0 * std::sin(angle);
        d.features.push_back(mean + noise(rng));
      }
      d.labels.push_back(c);
    }
  }
  d.splits = stratified_split(d.labels, num_classes, seed);
  return d;
}

/// Centroids of the generating distribution used by gaussian_blobs.
inline std::vector<std::vector<double>> blob_means(std::size_t num_classes, std::size_t dim) {
  std::vector<std::vector<double>> out(num_classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                         static_cast<double>(num_classes);
    out[c][0] = 2.0 * std::cos(angle);
    out[c][1] = 2.0 * std::sin(angle);
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX

struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxBadMagic : IdxError {
  using IdxError::IdxError;
};
struct IdxTruncated : IdxError {
  using IdxError::IdxError;
};
struct IdxCountMismatch : IdxError {
  using IdxError::IdxError;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) throw IdxTruncated("IDX header truncated: " + path.string());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace detail

/// Reads an IDX image file (magic 0x803, dims N x rows x cols, unsigned bytes)
/// and its IDX label file (magic 0x801). Pixels are scaled to [0, 1].
/// All samples land in the test split; call stratified_split to train on them.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto images = detail::read_all_bytes(images_path);
  const auto labels = detail::read_all_bytes(labels_path);

  const auto img_magic = detail::read_be32(images, 0, images_path);
  if (img_magic != kIdxImagesMagic) {
    throw IdxBadMagic("bad IDX image magic in " + images_path.string());
  }
  const auto lbl_magic = detail::read_be32(labels, 0, labels_path);
  if (lbl_magic != kIdxLabelsMagic) {
    throw IdxBadMagic("bad IDX label magic in " + labels_path.string());
  }
  const std::size_t n_images = detail::read_be32(images, 4, images_path);
  const std::size_t rows = detail::read_be32(images, 8, images_path);
  const std::size_t cols = detail::read_be32(images, 12, images_path);
  const std::size_t n_labels = detail::read_be32(labels, 4, labels_path);

  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n_images * dim) {
    throw IdxTruncated("IDX image data truncated: " + images_path.string());
  }
  if (labels.size() < 8 + n_labels) {
    throw IdxTruncated("IDX label data truncated: " + labels_path.string());
  }
  if (n_images != n_labels) {
    throw IdxCountMismatch("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                           std::to_string(n_labels) + " labels");
  }

  Dataset d;
  d.dim = dim;
  d.features.resize(n_images * dim);
  for (std::size_t i = 0; i < d.features.size(); ++i) {
    d.features[i] = static_cast<double>(images[16 + i]) / 255.0;
  }
  d.labels.resize(n_labels);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    d.labels[i] = labels[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = std::max<std::size_t>(2, max_label + 1);
  d.splits.test.resize(n_labels);
  for (std::size_t i = 0; i < n_labels; ++i) d.splits.test[i] = i;
  return d;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& cell, std::size_t line_no) {
  const auto t = trim(cell);
  double v = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw CsvError("CSV line " + std::to_string(line_no) + ": non-numeric cell '" + t + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Numeric CSV with a header row. Distinct label values, sorted ascending,
/// map to classes 0..K-1. All samples land in the test split.
inline Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CsvError("CSV is empty: " + path.string());
  auto header = detail::split_commas(line);
  for (auto& h : header) h = detail::trim(h);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) throw CsvError("CSV has no column named '" + label_column + "'");
  const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

  Dataset d;
  d.dim = header.size() - 1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_idx) d.feature_names.push_back(header[c]);
  }
  std::vector<double> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size()) {
      throw CsvError("CSV line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = detail::parse_number(cells[c], line_no);
      if (c == label_idx) {
        raw_labels.push_back(v);
      } else {
        d.features.push_back(v);
      }
    }
  }
  std::vector<double> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw CsvError("CSV has fewer than 2 distinct labels: " + path.string());
  d.num_classes = distinct.size();
  d.labels.reserve(raw_labels.size());
  for (double v : raw_labels) {
    d.labels.push_back(static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin()));
  }
  d.splits.test.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) d.splits.test[i] = i;
  return d;
}

/// Writes features plus a trailing `label` column (class index), shortest round-trip decimals.
inline void write_csv(const Dataset& d, const std::filesystem::path& path,
                      const std::string& label_column = "label") {
  std::string out;
  for (std::size_t c = 0; c < d.dim; ++c) {
    out += c < d.feature_names.size() ? d.feature_names[c] : "x" + std::to_string(c);
    out += ',';
  }
  out += label_column + "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.row(i)) {
      out += detail::format_double(v);
      out += ',';
    }
    out += std::to_string(d.labels[i]) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace labo
