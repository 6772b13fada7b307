#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "labo/data.hpp"
#include "labo/model.hpp"
#include "labo/train.hpp"

using namespace labo;

namespace {

Dataset small_blobs(std::uint64_t seed = 3) { return gaussian_blobs(3, 200, 2, 1.0, seed); }

TrainConfig short_cfg(Regularizer r, int steps = 200) {
  auto cfg = TrainConfig::for_regularizer(r, steps);
  cfg.batch_size = 32;
  cfg.eval_every = 50;
  return cfg;
}

}  // namespace

TEST(Regularizer, StringRoundTrip) {
  for (auto r : {Regularizer::none, Regularizer::ls, Regularizer::cp, Regularizer::kd, Regularizer::labo}) {
    EXPECT_EQ(regularizer_from_string(to_string(r)), r);
  }
  EXPECT_THROW(regularizer_from_string("mixup"), std::invalid_argument);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const auto labo = TrainConfig::for_regularizer(Regularizer::labo, 4000);
  EXPECT_EQ(labo.warmup, 500);
  EXPECT_EQ(labo.smoothing.tau(), 1.25);
  EXPECT_EQ(TrainConfig::for_regularizer(Regularizer::ls).warmup, 0);
  auto bad = labo;
  bad.warmup = 5000;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = labo;
  bad.smoothing = SmoothingConfig(SmoothingMode::uniform_ls, FixedAlpha{0.1});
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(ConfidenceHistogram, Bins) {
  ConfidenceHistogram h;
  EXPECT_EQ(h.edges.size(), 21u);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.0), 0u);
  EXPECT_EQ(ConfidenceHistogram::bin_of(1.0), 19u);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.26), 5u);
  h.add(0.9);
  h.add(0.92);
  h.add(0.4);
  EXPECT_EQ(h.total(), 3u);
  EXPECT_EQ(h.mode_bin(), 18u);
}

TEST(Evaluate, ZeroModelIsUniform) {
  const auto d = small_blobs();
  const auto m = Mlp::zeros({2, 4, 3});
  const auto ev = evaluate(m, d, d.splits.test);
  EXPECT_NEAR(ev.mean_confidence, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(ev.mean_entropy, std::log(3.0), 1e-14);
  EXPECT_EQ(ev.histogram.counts[ConfidenceHistogram::bin_of(1.0 / 3.0)], d.splits.test.size());
  EXPECT_EQ(ev.histogram.total(), d.splits.test.size());
}

TEST(Evaluate, Errors) {
  const auto d = small_blobs();
  EXPECT_THROW(evaluate(Mlp::zeros({2, 3}), d, {}), std::invalid_argument);
  EXPECT_THROW(evaluate(Mlp::zeros({3, 3}), d, d.splits.test), std::invalid_argument);
  EXPECT_THROW(evaluate(Mlp::zeros({2, 4}), d, d.splits.test), std::invalid_argument);
}

TEST(Evaluate, SeparableDataReachesPerfectAccuracy) {
  const auto d = gaussian_blobs(3, 100, 2, 0.05, 1);
  auto cfg = short_cfg(Regularizer::none, 300);
  const auto r = run_training(Mlp::he_uniform({2, 16, 3}, 1), d, cfg);
  EXPECT_EQ(evaluate(r.best_model, d, d.splits.test).accuracy, 1.0);
}

TEST(EpochSampler, CoversEachEpochOnce) {
  std::vector<std::size_t> pool = {3, 5, 7, 9, 11};
  EpochSampler s(pool, 1);
  auto a = s.next(5);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, pool);
  EXPECT_THROW(EpochSampler({}, 1), std::invalid_argument);
}

TEST(RunTraining, Deterministic) {
  const auto d = small_blobs();
  const auto cfg = short_cfg(Regularizer::labo);
  const auto a = run_training(Mlp::he_uniform({2, 8, 3}, 2), d, cfg);
  const auto b = run_training(Mlp::he_uniform({2, 8, 3}, 2), d, cfg);
  EXPECT_EQ(a.reports, b.reports);
  EXPECT_EQ(a.final_model, b.final_model);
  EXPECT_EQ(a.reports.size(), 4u);
  EXPECT_EQ(a.reports.back().step, 200);
}

TEST(RunTraining, WarmupCoveringAllStepsEqualsLs) {
  const auto d = small_blobs();
  auto labo = short_cfg(Regularizer::labo);
  labo.warmup = labo.steps;
  const auto ls = short_cfg(Regularizer::ls);
  const auto a = run_training(Mlp::he_uniform({2, 8, 3}, 4), d, labo);
  const auto b = run_training(Mlp::he_uniform({2, 8, 3}, 4), d, ls);
  EXPECT_EQ(a.reports, b.reports);
  EXPECT_EQ(a.final_model, b.final_model);
}

TEST(RunTraining, WarmupStepsMatchLsBitForBit) {
  const auto d = small_blobs();
  auto labo = short_cfg(Regularizer::labo);
  labo.warmup = 60;
  const auto ls = short_cfg(Regularizer::ls);
  std::vector<Mlp> a, b;
  run_training(Mlp::he_uniform({2, 8, 3}, 5), d, labo, nullptr,
               [&](int, const Mlp& m) { a.push_back(m); });
  run_training(Mlp::he_uniform({2, 8, 3}, 5), d, ls, nullptr,
               [&](int, const Mlp& m) { b.push_back(m); });
  for (int t = 0; t < 60; ++t) EXPECT_EQ(a[t], b[t]) << "step " << t;
  EXPECT_FALSE(a[60] == b[60]);
}

TEST(RunTraining, NoneUsesOneHotLabels) {
  const auto d = small_blobs();
  const auto r = run_training(Mlp::he_uniform({2, 8, 3}, 6), d, short_cfg(Regularizer::none));
  for (const auto& rep : r.reports) EXPECT_EQ(rep.mean_alpha, 0.0);
}

TEST(RunTraining, KdWithZeroAlphaEqualsNone) {
  const auto d = small_blobs();
  const auto teacher = Mlp::he_uniform(teacher_layers(d), 9);
  auto kd = short_cfg(Regularizer::kd);
  kd.smoothing = SmoothingConfig(SmoothingMode::kd_teacher, FixedAlpha{0.0});
  const auto a = run_training(Mlp::he_uniform({2, 8, 3}, 7), d, kd, &teacher);
  const auto b = run_training(Mlp::he_uniform({2, 8, 3}, 7), d, short_cfg(Regularizer::none));
  EXPECT_EQ(a.final_model, b.final_model);
  EXPECT_EQ(a.reports, b.reports);
}

TEST(RunTraining, KdNeedsTeacher) {
  const auto d = small_blobs();
  EXPECT_THROW(run_training(Mlp::he_uniform({2, 8, 3}, 1), d, short_cfg(Regularizer::kd)),
               std::invalid_argument);
}

TEST(RunTraining, ShapeMismatchThrows) {
  const auto d = small_blobs();
  EXPECT_THROW(run_training(Mlp::he_uniform({3, 8, 3}, 1), d, short_cfg(Regularizer::none)),
               std::invalid_argument);
}

TEST(RunTraining, DivergenceReportsStep) {
  const auto d = small_blobs();
  auto cfg = short_cfg(Regularizer::none);
  cfg.learning_rate = 1e6;
  cfg.momentum = 0.0;
  try {
    run_training(Mlp::he_uniform({2, 8, 3}, 1), d, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.step, 0);
    EXPECT_LT(e.step, cfg.steps);
  }
}

TEST(RunTraining, LaboAlphaWithinRuleRange) {
  const auto d = small_blobs();
  const auto r = run_training(Mlp::he_uniform({2, 8, 3}, 8), d, short_cfg(Regularizer::labo));
  for (const auto& rep : r.reports) {
    EXPECT_GE(rep.mean_alpha, 0.1 - 1e-12);
    EXPECT_LE(rep.mean_alpha, 1.0);
  }
}

TEST(RunTraining, CpAndTeacherRun) {
  const auto d = small_blobs();
  const auto r = run_training(Mlp::he_uniform({2, 8, 3}, 8), d, short_cfg(Regularizer::cp));
  EXPECT_GT(evaluate(r.best_model, d, d.splits.test).accuracy, 0.6);
  auto tc = short_cfg(Regularizer::ls);
  const auto t = train_teacher(d, tc);
  EXPECT_EQ(t.layer_sizes(), teacher_layers(d));
}

TEST(Reports, CsvAndHistogramFormats) {
  std::vector<EpochReport> reps = {{250, 0.5, 0.9, 0.8, 0.4, 0.1}};
  const auto csv = reports_to_csv(reps);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,train_loss,val_acc,mean_confidence,mean_entropy,mean_alpha");
  EXPECT_NE(csv.find("250,0.5,0.90000000000000002,"), std::string::npos);
  ConfidenceHistogram h;
  h.add(0.97);
  const auto j = histogram_to_json(h);
  EXPECT_EQ(j["edges"].size(), 21u);
  EXPECT_EQ(j["counts"][19], 1);
  const auto dat = histogram_plot_data(h);
  EXPECT_NE(dat.find("0.975 1"), std::string::npos);
}
