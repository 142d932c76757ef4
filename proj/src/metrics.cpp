#include "pfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "pfnet/error.hpp"
#include "pfnet/image_io.hpp"

namespace pfnet::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Maps {
  int h = 0;
  int w = 0;
  std::vector<double> pred;
  std::vector<char> gt;
  std::size_t fg = 0;
};

Maps prepare(const Tensor& pred, const Tensor& gt) {
  const Shape s = pred.shape();
  if (s.n != 1 || s.c != 1) {
    throw DimensionError("metrics: expected (1, 1, H, W) maps, got " + s.str());
  }
  require_same_shape(s, gt.shape(), "metrics gt");
  Maps m;
  m.h = s.h;
  m.w = s.w;
  m.pred.resize(pred.size());
  m.gt.resize(gt.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::isnan(pred[i])) throw DomainError("metrics: NaN in prediction");
    m.pred[i] = std::clamp(pred[i], 0.0, 1.0);
    if (gt[i] != 0.0 && gt[i] != 1.0) throw DomainError("metrics: gt must be binary");
    m.gt[i] = gt[i] == 1.0;
    m.fg += m.gt[i];
  }
  return m;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---- structure measure ----------------------------------------------------

double object_score(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  if (values.empty()) return 0.0;
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  const double sigma = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kEps);
}

double s_object(const Maps& m) {
  std::vector<double> fg, bg;
  fg.reserve(m.fg);
  bg.reserve(m.pred.size() - m.fg);
  for (std::size_t i = 0; i < m.pred.size(); ++i) {
    if (m.gt[i]) fg.push_back(m.pred[i]);
    else bg.push_back(1.0 - m.pred[i]);
  }
  const double u = static_cast<double>(m.fg) / static_cast<double>(m.pred.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double region_ssim(const Maps& m, int r0, int r1, int c0, int c1) {
  const int rows = r1 - r0, cols = c1 - c0;
  if (rows <= 0 || cols <= 0) return 0.0;
  const double n = static_cast<double>(rows) * cols;
  double x = 0.0, y = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      x += m.pred[r * m.w + c];
      y += m.gt[r * m.w + c];
    }
  x /= n;
  y /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const double dx = m.pred[r * m.w + c] - x;
      const double dy = m.gt[r * m.w + c] - y;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  sxx /= (n - 1.0 + kEps);
  syy /= (n - 1.0 + kEps);
  sxy /= (n - 1.0 + kEps);
  const double a = 4.0 * x * y * sxy;
  const double b = (x * x + y * y) * (sxx + syy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const Maps& m) {
  // 1-based centroid, rounded; the split column/row belongs to the first part.
  double sr = 0.0, sc = 0.0;
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c)
      if (m.gt[r * m.w + c]) {
        sr += r + 1;
        sc += c + 1;
      }
  const double fg = static_cast<double>(m.fg);
  const int X = static_cast<int>(std::lround(sc / fg));
  const int Y = static_cast<int>(std::lround(sr / fg));
  const double area = static_cast<double>(m.h) * m.w;
  const double w1 = static_cast<double>(X) * Y / area;
  const double w2 = static_cast<double>(m.w - X) * Y / area;
  const double w3 = static_cast<double>(X) * (m.h - Y) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * region_ssim(m, 0, Y, 0, X) + w2 * region_ssim(m, 0, Y, X, m.w) +
         w3 * region_ssim(m, Y, m.h, 0, X) + w4 * region_ssim(m, Y, m.h, X, m.w);
}

// ---- weighted F ----------------------------------------------------------

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[(y + r) * size + (x + r)] = v;
      total += v;
    }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

double mae(const Tensor& pred, const Tensor& gt) {
  const Maps m = prepare(pred, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < m.pred.size(); ++i) s += std::abs(m.pred[i] - m.gt[i]);
  return s / static_cast<double>(m.pred.size());
}

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
  const Maps m = prepare(pred, gt);
  if (m.fg == 0) return 1.0 - mean_of(m.pred);
  if (m.fg == m.pred.size()) return mean_of(m.pred);
  const double q = alpha * s_object(m) + (1.0 - alpha) * s_region(m);
  return std::clamp(q, 0.0, 1.0);
}

double e_measure_adaptive(const Tensor& pred, const Tensor& gt) {
  const Maps m = prepare(pred, gt);
  const double n = static_cast<double>(m.pred.size());
  const double threshold = std::min(2.0 * mean_of(m.pred), 1.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < m.pred.size(); ++i) {
    if (m.pred[i] >= threshold && m.pred[i] > 0.0) (m.gt[i] ? tp : fp) += 1;
  }
  const std::size_t pred_fg = tp + fp;
  double enhanced = 0.0;
  if (m.fg == 0) {
    enhanced = n - static_cast<double>(pred_fg);
  } else if (m.fg == m.pred.size()) {
    enhanced = static_cast<double>(pred_fg);
  } else {
    // Four (pred, gt) combinations, each with a constant alignment value.
    const std::size_t fn = m.fg - tp;
    const std::size_t tn = m.pred.size() - pred_fg - fn;
    const double mu_p = static_cast<double>(pred_fg) / n;
    const double mu_g = static_cast<double>(m.fg) / n;
    auto term = [](double a, double b) {
      const double align = 2.0 * a * b / (a * a + b * b + kEps);
      return (align + 1.0) * (align + 1.0) / 4.0;
    };
    enhanced = tp * term(1.0 - mu_p, 1.0 - mu_g) + fp * term(1.0 - mu_p, -mu_g) +
               fn * term(-mu_p, 1.0 - mu_g) + tn * term(-mu_p, -mu_g);
  }
  return std::clamp(enhanced / n, 0.0, 1.0);
}

NearestForeground nearest_foreground(const Tensor& gt) {
  const Shape s = gt.shape();
  const int h = s.h, w = s.w;
  NearestForeground out;
  out.distance.assign(static_cast<std::size_t>(h) * w,
                      std::numeric_limits<double>::infinity());
  out.offsets.assign(out.distance.size() + 1, 0);
  // Per column: nearest foreground row at or above / at or below each row.
  std::vector<int> up(out.distance.size(), -1), down(out.distance.size(), -1);
  for (int c = 0; c < w; ++c) {
    int last = -1;
    for (int r = 0; r < h; ++r) {
      if (gt[r * w + c] != 0.0) last = r;
      up[r * w + c] = last;
    }
    last = -1;
    for (int r = h - 1; r >= 0; --r) {
      if (gt[r * w + c] != 0.0) last = r;
      down[r * w + c] = last;
    }
  }
  std::vector<int> found;
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(r) * w + x;
      long best = std::numeric_limits<long>::max();
      for (int c = 0; c < w; ++c) {
        const long dx2 = static_cast<long>(x - c) * (x - c);
        if (dx2 > best) continue;
        const int u = up[r * w + c], d = down[r * w + c];
        if (u >= 0) best = std::min(best, dx2 + static_cast<long>(r - u) * (r - u));
        if (d >= 0) best = std::min(best, dx2 + static_cast<long>(d - r) * (d - r));
      }
      found.clear();
      if (best != std::numeric_limits<long>::max()) {
        out.distance[i] = std::sqrt(static_cast<double>(best));
        for (int c = 0; c < w; ++c) {
          const long dx2 = static_cast<long>(x - c) * (x - c);
          const int u = up[r * w + c], d = down[r * w + c];
          if (u >= 0 && dx2 + static_cast<long>(r - u) * (r - u) == best) {
            found.push_back(u * w + c);
          }
          if (d >= 0 && d != u && dx2 + static_cast<long>(d - r) * (d - r) == best) {
            found.push_back(d * w + c);
          }
        }
        std::sort(found.begin(), found.end());
      }
      out.nearest.insert(out.nearest.end(), found.begin(), found.end());
      out.offsets[i + 1] = static_cast<int>(out.nearest.size());
    }
  return out;
}

double weighted_f_measure(const Tensor& pred, const Tensor& gt, double beta2) {
  const Maps m = prepare(pred, gt);
  if (m.fg == 0) return 1.0 - mean_of(m.pred);
  const int h = m.h, w = m.w;
  const std::size_t n = m.pred.size();

  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(m.pred[i] - m.gt[i]);

  const NearestForeground nf = nearest_foreground(gt);
  // Background pixels inherit the error of their nearest foreground pixel(s).
  std::vector<double> err_t = err;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.gt[i]) continue;
    double acc = 0.0;
    const int b = nf.offsets[i], e = nf.offsets[i + 1];
    for (int k = b; k < e; ++k) acc += err[nf.nearest[k]];
    err_t[i] = acc / (e - b);
  }

  static const std::vector<double> kernel = gaussian_kernel(7, 5.0);
  std::vector<double> err_a(n, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = -3; a <= 3; ++a) {
        const int rr = r + a;
        if (rr < 0 || rr >= h) continue;
        for (int b = -3; b <= 3; ++b) {
          const int cc = c + b;
          if (cc < 0 || cc >= w) continue;
          acc += kernel[(a + 3) * 7 + (b + 3)] * err_t[rr * w + cc];
        }
      }
      err_a[r * w + c] = acc;
    }

  double fg_err = 0.0, bg_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.gt[i]) {
      fg_err += std::min(err[i], err_a[i]);
    } else {
      const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * nf.distance[i]);
      bg_err += err[i] * importance;
    }
  }
  const double fg = static_cast<double>(m.fg);
  const double tp = fg - fg_err;
  const double recall = 1.0 - fg_err / fg;
  const double precision = tp / (kEps + tp + bg_err);
  const double q = (1.0 + beta2) * recall * precision / (kEps + recall + beta2 * precision);
  return std::clamp(q, 0.0, 1.0);
}

// ---- reports -------------------------------------------------------------

void MetricReport::recompute_mean() {
  mean = {};
  if (per_image.empty()) return;
  for (const auto& r : per_image) {
    mean.s_alpha += r.s_alpha;
    mean.e_ad += r.e_ad;
    mean.wf += r.wf;
    mean.mae += r.mae;
  }
  const double n = static_cast<double>(per_image.size());
  mean.s_alpha /= n;
  mean.e_ad /= n;
  mean.wf /= n;
  mean.mae /= n;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["count"] = per_image.size();
  j["per_image"] = nlohmann::json::array();
  for (const auto& r : per_image) {
    j["per_image"].push_back({{"name", r.name},
                              {"s_alpha", r.s_alpha},
                              {"e_ad", r.e_ad},
                              {"wf", r.wf},
                              {"mae", r.mae}});
  }
  j["mean"] = {{"s_alpha", mean.s_alpha},
               {"e_ad", mean.e_ad},
               {"wf", mean.wf},
               {"mae", mean.mae}};
  j["errors"] = errors;
  j["warnings"] = warnings;
  return j;
}

std::string MetricReport::to_table() const {
  std::size_t width = 4;
  for (const auto& r : per_image) width = std::max(width, r.name.size());
  std::ostringstream out;
  char buf[128];
  auto row = [&](const std::string& name, double s, double e, double f, double m) {
    std::snprintf(buf, sizeof(buf), "  %8.4f  %8.4f  %8.4f  %8.4f\n", s, e, f, m);
    out << name << std::string(width - name.size(), ' ') << buf;
  };
  std::snprintf(buf, sizeof(buf), "  %8s  %8s  %8s  %8s\n", "S_alpha", "E_phi^ad",
                "F_beta^w", "M");
  out << "name" << std::string(width - 4, ' ') << buf;
  for (const auto& r : per_image) row(r.name, r.s_alpha, r.e_ad, r.wf, r.mae);
  row("mean", mean.s_alpha, mean.e_ad, mean.wf, mean.mae);
  return out.str();
}

ImageMetrics evaluate_pair(const std::string& name, const Tensor& pred, const Tensor& gt) {
  ImageMetrics r;
  r.name = name;
  r.s_alpha = s_measure(pred, gt);
  r.e_ad = e_measure_adaptive(pred, gt);
  r.wf = weighted_f_measure(pred, gt);
  r.mae = mae(pred, gt);
  return r;
}

MetricReport evaluate_pairs(const std::vector<std::string>& names,
                            const std::vector<Tensor>& preds,
                            const std::vector<Tensor>& gts) {
  if (names.size() != preds.size() || names.size() != gts.size()) {
    throw DimensionError("evaluate_pairs: name/pred/gt counts differ");
  }
  const int count = static_cast<int>(names.size());
  std::vector<ImageMetrics> rows(names.size());
  std::vector<std::string> failures(names.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      rows[i] = evaluate_pair(names[i], preds[i], gts[i]);
    } catch (const std::exception& e) {
      failures[i] = names[i] + ": " + e.what();
    }
  }
  MetricReport report;
  for (int i = 0; i < count; ++i) {
    if (failures[i].empty()) report.per_image.push_back(rows[i]);
    else report.errors.push_back(failures[i]);
  }
  report.recompute_mean();
  return report;
}

MetricReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir) {
  namespace fs = std::filesystem;
  MetricReport report;
  auto index = [&report](const std::string& dir) {
    std::map<std::string, fs::path> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
      report.errors.push_back("not a directory: " + dir);
      return files;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && is_image_file(e.path())) {
        files[e.path().stem().string()] = e.path();
      }
    }
    return files;
  };
  const auto preds = index(pred_dir);
  const auto gts = index(gt_dir);

  std::vector<std::string> names;
  std::vector<Tensor> pred_maps, gt_maps;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) {
      report.errors.push_back(stem + ": no prediction in " + pred_dir);
      continue;
    }
    try {
      Tensor gt = binarize_mask(read_image_gray(gt_path.string()));
      Tensor pred = read_image_gray(it->second.string());
      if (!(pred.shape() == gt.shape())) {
        pred = resize_bilinear(pred, gt.shape().h, gt.shape().w);
      }
      names.push_back(stem);
      pred_maps.push_back(std::move(pred));
      gt_maps.push_back(std::move(gt));
    } catch (const std::exception& e) {
      report.errors.push_back(stem + ": " + e.what());
    }
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) report.errors.push_back(stem + ": no ground truth in " + gt_dir);
  }

  MetricReport scored = evaluate_pairs(names, pred_maps, gt_maps);
  report.per_image = std::move(scored.per_image);
  report.errors.insert(report.errors.end(), scored.errors.begin(), scored.errors.end());
  if (report.per_image.empty()) {
    report.warnings.push_back("no matching prediction/ground-truth pairs between " +
                              pred_dir + " and " + gt_dir);
  }
  report.recompute_mean();
  return report;
}

}  // namespace pfnet::metrics
