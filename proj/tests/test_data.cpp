#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "labo/data.hpp"

using namespace labo;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("labo_test_" + name); }

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Two 2x2 images with pixel bytes 0,1,2,3 and 255,128,64,0; labels 1 and 0.
void write_idx_fixture(const fs::path& img, const fs::path& lbl, std::uint32_t img_magic = 0x803,
                       std::uint32_t n_labels = 2, bool truncate = false) {
  std::vector<unsigned char> b;
  put_be32(b, img_magic);
  put_be32(b, 2);
  put_be32(b, 2);
  put_be32(b, 2);
  for (unsigned char v : {0, 1, 2, 3, 255, 128, 64, 0}) b.push_back(v);
  if (truncate) b.resize(b.size() - 3);
  write_bytes(img, b);
  std::vector<unsigned char> l;
  put_be32(l, 0x801);
  put_be32(l, n_labels);
  for (std::uint32_t i = 0; i < n_labels; ++i) l.push_back(static_cast<unsigned char>(i == 0 ? 1 : 0));
  write_bytes(lbl, l);
}

double nearest_centroid_accuracy(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<std::vector<double>> c(d.num_classes, std::vector<double>(d.dim, 0.0));
  std::vector<double> n(d.num_classes, 0.0);
  for (auto i : d.splits.train) {
    for (std::size_t k = 0; k < d.dim; ++k) c[d.labels[i]][k] += d.row(i)[k];
    n[d.labels[i]] += 1.0;
  }
  for (std::size_t y = 0; y < d.num_classes; ++y) {
    for (auto& v : c[y]) v /= n[y];
  }
  std::size_t ok = 0;
  for (auto i : idx) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t y = 0; y < d.num_classes; ++y) {
      double dist = 0.0;
      for (std::size_t k = 0; k < d.dim; ++k) dist += (d.row(i)[k] - c[y][k]) * (d.row(i)[k] - c[y][k]);
      if (dist < best) {
        best = dist;
        arg = y;
      }
    }
    ok += arg == d.labels[i];
  }
  return static_cast<double>(ok) / static_cast<double>(idx.size());
}

}  // namespace

TEST(Blobs, DeterministicAndValid) {
  const auto a = gaussian_blobs(3, 100, 2, 1.0, 5);
  const auto b = gaussian_blobs(3, 100, 2, 1.0, 5);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.splits.test, b.splits.test);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.splits.train.size() + a.splits.val.size() + a.splits.test.size(), a.size());
  EXPECT_EQ(a.splits.train.size(), 240u);
  EXPECT_EQ(a.splits.val.size(), 30u);
  EXPECT_NE(gaussian_blobs(3, 100, 2, 1.0, 6).features, a.features);
}

TEST(Blobs, SplitsAreStratified) {
  const auto d = gaussian_blobs(4, 50, 3, 0.5, 2);
  for (const auto* part : {&d.splits.train, &d.splits.val, &d.splits.test}) {
    std::vector<int> count(4, 0);
    for (auto i : *part) ++count[d.labels[i]];
    for (int c : count) EXPECT_EQ(c, count[0]);
  }
}

TEST(Blobs, Errors) {
  EXPECT_THROW(gaussian_blobs(1, 10, 2, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(gaussian_blobs(3, 10, 2, 0.0, 1), std::invalid_argument);
}

TEST(Blobs, TinyNoiseIsSeparable) {
  const auto d = gaussian_blobs(5, 40, 2, 1e-3, 3);
  EXPECT_EQ(nearest_centroid_accuracy(d, d.splits.test), 1.0);
}

TEST(Blobs, StdOneIsBayesLimited) {
  const auto d = gaussian_blobs(3, 2000, 2, 1.0, 7);
  const double acc = nearest_centroid_accuracy(d, d.splits.test);
  EXPECT_GE(acc, 0.85);
  EXPECT_LE(acc, 0.95);
}

TEST(Idx, FixtureValues) {
  const auto img = tmp("img.idx"), lbl = tmp("lbl.idx");
  write_idx_fixture(img, lbl);
  const auto d = load_idx(img, lbl);
  EXPECT_EQ(d.dim, 4u);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.num_classes, 2u);
  const std::vector<double> want = {0.0, 1.0 / 255, 2.0 / 255, 3.0 / 255, 1.0, 128.0 / 255, 64.0 / 255, 0.0};
  EXPECT_EQ(d.features, want);
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0}));
  EXPECT_NO_THROW(d.validate());
  fs::remove(img);
  fs::remove(lbl);
}

TEST(Idx, DistinctErrors) {
  const auto img = tmp("img_bad.idx"), lbl = tmp("lbl_bad.idx");
  write_idx_fixture(img, lbl, 0x804);
  EXPECT_THROW(load_idx(img, lbl), IdxBadMagic);
  write_idx_fixture(img, lbl, 0x803, 2, true);
  EXPECT_THROW(load_idx(img, lbl), IdxTruncated);
  write_idx_fixture(img, lbl, 0x803, 3);
  EXPECT_THROW(load_idx(img, lbl), IdxCountMismatch);
  fs::remove(img);
  fs::remove(lbl);
}

TEST(Idx, MnistTestFileIfPresent) {
  const fs::path img = "data/t10k-images-idx3-ubyte", lbl = "data/t10k-labels-idx1-ubyte";
  if (!fs::exists(img) || !fs::exists(lbl)) GTEST_SKIP() << "MNIST test files not present";
  const auto d = load_idx(img, lbl);
  EXPECT_EQ(d.size(), 10000u);
  EXPECT_EQ(d.dim, 784u);
  EXPECT_EQ(d.num_classes, 10u);
}

TEST(Csv, ToyFixture) {
  const auto p = tmp("toy.csv");
  write_text(p, "a,label,b\n1.5,3,2\n-1,7,0.25\n0,3,1e-3\n4,10,5\n");
  const auto d = load_csv(p, "label");
  EXPECT_EQ(d.dim, 2u);
  EXPECT_EQ(d.num_classes, 3u);
  EXPECT_EQ(d.features, (std::vector<double>{1.5, 2, -1, 0.25, 0, 1e-3, 4, 5}));
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{0, 1, 0, 2}));
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  fs::remove(p);
}

TEST(Csv, Errors) {
  const auto p = tmp("bad.csv");
  write_text(p, "x,label\n1,0\n2,0\n");
  EXPECT_THROW(load_csv(p, "label"), CsvError);
  write_text(p, "x,label\n1,0\n2\n");
  EXPECT_THROW(load_csv(p, "label"), CsvError);
  write_text(p, "x,label\n1,0\nabc,1\n");
  EXPECT_THROW(load_csv(p, "label"), CsvError);
  write_text(p, "x,y\n1,0\n2,1\n");
  EXPECT_THROW(load_csv(p, "label"), CsvError);
  fs::remove(p);
}

TEST(Csv, RoundTrip) {
  const auto d = gaussian_blobs(3, 30, 4, 0.7, 12);
  const auto p = tmp("rt.csv");
  write_csv(d, p);
  const auto back = load_csv(p, "label");
  ASSERT_EQ(back.features.size(), d.features.size());
  for (std::size_t i = 0; i < d.features.size(); ++i) EXPECT_NEAR(back.features[i], d.features[i], 1e-12);
  EXPECT_EQ(back.labels, d.labels);
  fs::remove(p);
}

TEST(StratifiedSplit, PartitionsIndices) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 97; ++i) labels.push_back(i % 3);
  const auto s = stratified_split(labels, 3, 4);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 97u);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 97u);
}
