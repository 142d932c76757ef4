#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles/oracles.hpp"
#include "pfnet/error.hpp"
#include "pfnet/image_io.hpp"
#include "pfnet/metrics.hpp"
#include "support/test_util.hpp"

namespace pfnet::metrics {
namespace {

namespace fs = std::filesystem;
using testutil::random_mask;
using testutil::random_tensor;

Tensor flip(const Tensor& t) {
  const Shape s = t.shape();
  Tensor out(s);
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j) out.at(0, 0, i, j) = t.at(0, 0, i, s.w - 1 - j);
  return out;
}

Tensor complement(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = 1.0 - t[i];
  return out;
}

Tensor interior_disc(int size, double radius) {
  Tensor gt(Shape{1, 1, size, size});
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      if ((i - c) * (i - c) + (j - c) * (j - c) <= radius * radius) gt.at(0, 0, i, j) = 1.0;
  return gt;
}

// Random prediction: uniform, binary, or a blurred/noisy version of gt.
Tensor random_pred(const Tensor& gt, testutil::Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor p(gt.shape());
  const int k = kind(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (k == 0) p[i] = u(rng);
    else if (k == 1) p[i] = u(rng) < 0.4 ? 1.0 : 0.0;
    else p[i] = std::clamp(0.7 * gt[i] + 0.3 * u(rng), 0.0, 1.0);
  }
  return p;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("pfnet_metrics_" + tag + "_" +
                                           std::to_string(std::random_device{}()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Mae, Examples) {
  const Tensor zeros(Shape{1, 1, 4, 4}), ones(Shape{1, 1, 4, 4}, 1.0);
  EXPECT_EQ(mae(zeros, zeros), 0.0);
  EXPECT_EQ(mae(ones, zeros), 1.0);
  Tensor half(Shape{1, 1, 4, 4});
  for (int i = 0; i < 8; ++i) half[i] = 1.0;
  EXPECT_DOUBLE_EQ(mae(Tensor(half.shape(), 0.25), half), 0.5);
}

TEST(Metrics, RejectShapeMismatchAndBadInputs) {
  const Tensor a(Shape{1, 1, 4, 4}), b(Shape{1, 1, 4, 5});
  EXPECT_THROW(mae(a, b), DimensionError);
  EXPECT_THROW(s_measure(a, b), DimensionError);
  EXPECT_THROW(e_measure_adaptive(a, b), DimensionError);
  EXPECT_THROW(weighted_f_measure(a, b), DimensionError);
  EXPECT_THROW(mae(Tensor(Shape{2, 1, 4, 4}), Tensor(Shape{2, 1, 4, 4})), DimensionError);
  Tensor soft = a;
  soft[0] = 0.5;
  EXPECT_THROW(s_measure(a, soft), DomainError);
  Tensor nan = a;
  nan[1] = std::nan("");
  EXPECT_THROW(mae(nan, a), DomainError);
}

TEST(Metrics, PredictionsAreClipped) {
  testutil::Rng rng(1);
  const Tensor gt = random_mask(1, 8, 8, rng);
  const Tensor wild = random_tensor(gt.shape(), rng, -2, 3);
  Tensor clipped = wild;
  for (auto& v : clipped.values()) v = std::clamp(v, 0.0, 1.0);
  EXPECT_EQ(mae(wild, gt), mae(clipped, gt));
  EXPECT_EQ(s_measure(wild, gt), s_measure(clipped, gt));
  EXPECT_EQ(weighted_f_measure(wild, gt), weighted_f_measure(clipped, gt));
}

TEST(SMeasure, PerfectBinaryPredictionIsOne) {
  testutil::Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Tensor gt = random_mask(1, 12, 10, rng);
    EXPECT_NEAR(s_measure(gt, gt), 1.0, 1e-6);
  }
}

TEST(SMeasure, DegenerateMasksFallBack) {
  const Tensor empty(Shape{1, 1, 6, 6}), full(Shape{1, 1, 6, 6}, 1.0);
  EXPECT_DOUBLE_EQ(s_measure(Tensor(empty.shape(), 0.3), empty), 0.7);
  EXPECT_DOUBLE_EQ(s_measure(Tensor(full.shape(), 0.3), full), 0.3);
}

TEST(SMeasure, MatchesOracle) {
  testutil::Rng rng(3);
  for (int t = 0; t < 150; ++t) {
    const Tensor gt = random_mask(1, 4 + t % 13, 16 - t % 7, rng);
    const Tensor p = random_pred(gt, rng);
    EXPECT_NEAR(s_measure(p, gt), oracle::s_measure(p, gt), 1e-9) << "instance " << t;
  }
}

TEST(EMeasure, PerfectAndInvertedAlignment) {
  testutil::Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Tensor gt = random_mask(1, 10, 10, rng);
    EXPECT_NEAR(e_measure_adaptive(gt, gt), 1.0, 1e-12);
  }
  Tensor half(Shape{1, 1, 8, 8});
  for (int i = 0; i < 32; ++i) half[i] = 1.0;
  const double inverted = e_measure_adaptive(complement(half), half);
  EXPECT_NEAR(inverted, oracle::e_measure_adaptive(complement(half), half), 1e-12);
  EXPECT_LT(inverted, 1e-6);
}

TEST(EMeasure, DegenerateCasesStayInRange) {
  const Tensor empty(Shape{1, 1, 6, 6}), full(Shape{1, 1, 6, 6}, 1.0);
  EXPECT_EQ(e_measure_adaptive(empty, empty), 1.0);
  EXPECT_EQ(e_measure_adaptive(full, full), 1.0);
  EXPECT_EQ(e_measure_adaptive(full, empty), 0.0);
  EXPECT_EQ(e_measure_adaptive(empty, full), 0.0);
  for (double c : {0.0, 0.2, 0.5, 1.0}) {
    for (const Tensor* gt : {&empty, &full}) {
      const double e = e_measure_adaptive(Tensor(gt->shape(), c), *gt);
      EXPECT_TRUE(std::isfinite(e));
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
  }
}

TEST(EMeasure, MatchesOracle) {
  testutil::Rng rng(5);
  for (int t = 0; t < 150; ++t) {
    const Tensor gt = random_mask(1, 3 + t % 14, 16 - t % 5, rng);
    const Tensor p = random_pred(gt, rng);
    EXPECT_NEAR(e_measure_adaptive(p, gt), oracle::e_measure_adaptive(p, gt), 1e-9)
        << "instance " << t;
  }
}

TEST(WeightedF, PerfectAndComplement) {
  testutil::Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Tensor gt = random_mask(1, 10, 12, rng);
    EXPECT_NEAR(weighted_f_measure(gt, gt), 1.0, 1e-12);
  }
  const Tensor disc = interior_disc(20, 5.0);
  EXPECT_LT(weighted_f_measure(complement(disc), disc), 1e-6);
}

TEST(WeightedF, EmptyMaskFallsBack) {
  const Tensor empty(Shape{1, 1, 5, 5});
  EXPECT_DOUBLE_EQ(weighted_f_measure(Tensor(empty.shape(), 0.4), empty), 0.6);
  EXPECT_EQ(weighted_f_measure(empty, empty), 1.0);
}

TEST(WeightedF, MatchesOracle) {
  testutil::Rng rng(7);
  for (int t = 0; t < 150; ++t) {
    const Tensor gt = random_mask(1, 4 + t % 13, 16 - t % 9, rng);
    const Tensor p = random_pred(gt, rng);
    EXPECT_NEAR(weighted_f_measure(p, gt), oracle::weighted_f_measure(p, gt), 1e-9)
        << "instance " << t;
  }
}

TEST(WeightedF, BinaryPredictionScoresOneOnlyWhenExact) {
  testutil::Rng rng(8);
  std::uniform_int_distribution<int> pick(0, 99);
  for (int t = 0; t < 60; ++t) {
    const Tensor gt = random_mask(1, 10, 10, rng);
    Tensor p = gt;
    const int flips = 1 + t % 4;
    for (int k = 0; k < flips; ++k) {
      const int i = pick(rng);
      p[i] = 1.0 - p[i];
    }
    const bool same = max_abs_diff(p, gt) == 0.0;
    const double wf = weighted_f_measure(p, gt);
    if (same) EXPECT_NEAR(wf, 1.0, 1e-12);
    else EXPECT_LT(wf, 1.0 - 1e-9);
  }
}

TEST(NearestForegroundTransform, MatchesBruteForce) {
  testutil::Rng rng(9);
  for (int t = 0; t < 40; ++t) {
    const Tensor gt = random_mask(1, 3 + t % 11, 14 - t % 6, rng);
    const Shape s = gt.shape();
    bool any = false;
    for (double v : gt.values()) any = any || v == 1.0;
    if (!any) continue;
    const NearestForeground nf = nearest_foreground(gt);
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        long best = -1;
        std::vector<int> ties;
        for (int a = 0; a < s.h; ++a)
          for (int b = 0; b < s.w; ++b) {
            if (gt.at(0, 0, a, b) != 1.0) continue;
            const long d = long(a - i) * (a - i) + long(b - j) * (b - j);
            if (best < 0 || d < best) {
              best = d;
              ties.clear();
            }
            if (d == best) ties.push_back(a * s.w + b);
          }
        const int idx = i * s.w + j;
        EXPECT_DOUBLE_EQ(nf.distance[idx], std::sqrt(double(best)));
        const std::vector<int> got(nf.nearest.begin() + nf.offsets[idx],
                                   nf.nearest.begin() + nf.offsets[idx + 1]);
        EXPECT_EQ(got, ties) << "pixel " << i << "," << j;
      }
  }
}

TEST(MetricProperties, HorizontalFlipInvariance) {
  testutil::Rng rng(10);
  for (int t = 0; t < 60; ++t) {
    const Tensor gt = random_mask(1, 12, 15, rng);
    const Tensor p = random_pred(gt, rng);
    const Tensor fp = flip(p), fg = flip(gt);
    EXPECT_NEAR(mae(fp, fg), mae(p, gt), 1e-12);
    EXPECT_NEAR(e_measure_adaptive(fp, fg), e_measure_adaptive(p, gt), 1e-12);
    EXPECT_NEAR(weighted_f_measure(fp, fg), weighted_f_measure(p, gt), 1e-12);
  }
}

TEST(MetricProperties, SMeasureFlipInvariantForSymmetricSplit) {
  // The region term splits at the rounded 1-based centroid column; when the
  // centroid sits on the grid midline both halves swap exactly.
  testutil::Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    Tensor gt(Shape{1, 1, 12, 13});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j <= 6; ++j) {
        const double v = u(rng) < 0.4 ? 1.0 : 0.0;
        gt.at(0, 0, i, j) = v;
        gt.at(0, 0, i, 12 - j) = v;
      }
    gt.at(0, 0, 5, 6) = 1.0;
    const Tensor p = random_pred(gt, rng);
    EXPECT_NEAR(s_measure(flip(p), flip(gt)), s_measure(p, gt), 0.05);
  }
}

TEST(MetricProperties, MaeComplementSymmetry) {
  testutil::Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const Tensor gt = random_mask(1, 9, 7, rng);
    const Tensor p = random_pred(gt, rng);
    EXPECT_NEAR(mae(complement(p), complement(gt)), mae(p, gt), 1e-12);
  }
}

TEST(MetricProperties, AllMetricsInUnitInterval) {
  testutil::Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    const Tensor gt = random_mask(1, 8, 11, rng);
    const ImageMetrics m = evaluate_pair("x", random_pred(gt, rng), gt);
    for (double v : {m.s_alpha, m.e_ad, m.wf, m.mae}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(EvaluatePairs, ParallelMatchesSerial) {
  testutil::Rng rng(14);
  std::vector<std::string> names;
  std::vector<Tensor> preds, gts;
  for (int t = 0; t < 40; ++t) {
    gts.push_back(random_mask(1, 16, 16, rng));
    preds.push_back(random_pred(gts.back(), rng));
    names.push_back("img" + std::to_string(t));
  }
  const MetricReport report = evaluate_pairs(names, preds, gts);
  ASSERT_EQ(report.per_image.size(), names.size());
  MetricMeans mean;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const ImageMetrics m = evaluate_pair(names[i], preds[i], gts[i]);
    EXPECT_EQ(report.per_image[i].name, names[i]);
    EXPECT_EQ(report.per_image[i].s_alpha, m.s_alpha);
    EXPECT_EQ(report.per_image[i].e_ad, m.e_ad);
    EXPECT_EQ(report.per_image[i].wf, m.wf);
    EXPECT_EQ(report.per_image[i].mae, m.mae);
    mean.mae += m.mae / names.size();
  }
  EXPECT_NEAR(report.mean.mae, mean.mae, 1e-12);
}

TEST(EvaluatePairs, BadPairBecomesErrorEntry) {
  const Tensor gt(Shape{1, 1, 4, 4});
  const MetricReport r = evaluate_pairs({"ok", "bad"}, {gt, Tensor(Shape{1, 1, 3, 3})}, {gt, gt});
  EXPECT_EQ(r.per_image.size(), 1u);
  EXPECT_EQ(r.errors.size(), 1u);
}

TEST(EvaluateDirs, GroundTruthCopiedAsPredictionIsPerfect) {
  TempDir dir("identity");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  testutil::Rng rng(15);
  for (int t = 0; t < 4; ++t) {
    const Tensor gt = random_mask(1, 20, 24, rng, false);
    const std::string name = "img" + std::to_string(t) + ".png";
    write_png_gray((dir / "gt" / name).string(), gt);
    fs::copy_file(dir / "gt" / name, dir / "pred" / name);
  }
  const MetricReport r = evaluate_dirs((dir / "pred").string(), (dir / "gt").string());
  ASSERT_EQ(r.per_image.size(), 4u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_NEAR(r.mean.s_alpha, 1.0, 1e-6);
  EXPECT_NEAR(r.mean.e_ad, 1.0, 1e-12);
  EXPECT_NEAR(r.mean.wf, 1.0, 1e-12);
  EXPECT_EQ(r.mean.mae, 0.0);
  EXPECT_EQ(r.per_image[0].name, "img0");
}

TEST(EvaluateDirs, DisjointNamesGiveEmptyReportWithWarning) {
  TempDir dir("disjoint");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  write_png_gray((dir / "gt" / "a.png").string(), Tensor(Shape{1, 1, 4, 4}));
  write_png_gray((dir / "pred" / "b.png").string(), Tensor(Shape{1, 1, 4, 4}));
  const MetricReport r = evaluate_dirs((dir / "pred").string(), (dir / "gt").string());
  EXPECT_TRUE(r.per_image.empty());
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.errors.size(), 2u);
}

TEST(EvaluateDirs, MeanOfPerfectAndInvertedIsHalf) {
  TempDir dir("mean");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  const Tensor disc = interior_disc(16, 4.0);
  write_png_gray((dir / "gt" / "a.png").string(), disc);
  write_png_gray((dir / "gt" / "b.png").string(), disc);
  write_png_gray((dir / "pred" / "a.png").string(), disc);
  write_png_gray((dir / "pred" / "b.png").string(), complement(disc));
  const MetricReport r = evaluate_dirs((dir / "pred").string(), (dir / "gt").string());
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.per_image[0].mae, 0.0);
  EXPECT_EQ(r.per_image[1].mae, 1.0);
  EXPECT_DOUBLE_EQ(r.mean.mae, 0.5);
  const nlohmann::json j = r.to_json();
  EXPECT_DOUBLE_EQ(j["mean"]["mae"].get<double>(), 0.5);
  EXPECT_EQ(j["per_image"].size(), 2u);
}

TEST(EvaluateDirs, ResizesPredictionAndReportsUnreadable) {
  TempDir dir("resize");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  write_png_gray((dir / "gt" / "a.png").string(), Tensor(Shape{1, 1, 16, 16}, 1.0));
  write_png_gray((dir / "pred" / "a.png").string(), Tensor(Shape{1, 1, 8, 8}, 1.0));
  write_png_gray((dir / "gt" / "b.png").string(), Tensor(Shape{1, 1, 8, 8}));
  { std::ofstream((dir / "pred" / "b.png").string()) << "not a png"; }
  const MetricReport r = evaluate_dirs((dir / "pred").string(), (dir / "gt").string());
  ASSERT_EQ(r.per_image.size(), 1u);
  EXPECT_EQ(r.per_image[0].mae, 0.0);
  EXPECT_EQ(r.errors.size(), 1u);
}

TEST(EvaluateDirs, MissingDirectoryIsReported) {
  const MetricReport r = evaluate_dirs("/nonexistent/pred", "/nonexistent/gt");
  EXPECT_TRUE(r.per_image.empty());
  EXPECT_FALSE(r.errors.empty());
}

}  // namespace
}  // namespace pfnet::metrics
