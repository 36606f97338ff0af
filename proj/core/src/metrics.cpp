#include "panoscan/metrics.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "panoscan/errors.hpp"
#include "panoscan/image.hpp"

namespace panoscan {

namespace {

void require_same_length(const Scanpath& a, const Scanpath& b) {
  if (a.points.size() != b.points.size()) throw ShapeError("scanpaths must have equal lengths");
  if (a.points.empty()) throw EmptyPath("scanpath is empty");
}

void require_sets(std::span<const Scanpath> a, std::span<const Scanpath> b) {
  if (a.empty() || b.empty()) throw EmptyPath("scanpath sets must be nonempty");
}

// atan2 form: exact zero for equal points and well conditioned near 0 and pi.
double great_circle(const Viewpoint& p, const Viewpoint& q) {
  const double dt = q.theta - p.theta;
  const double cp = std::cos(p.phi), sp = std::sin(p.phi), cq = std::cos(q.phi), sq = std::sin(q.phi);
  const double y = std::hypot(cq * std::sin(dt), cp * sq - sp * cq * std::cos(dt));
  const double x = sp * sq + cp * cq * std::cos(dt);
  return std::atan2(y, x);
}

double median(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 == 1 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

double sse(std::span<const double> fit, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (fit[i] - y[i]) * (fit[i] - y[i]);
  return s;
}

}  // namespace

double od(const Scanpath& a, const Scanpath& b) {
  require_same_length(a, b);
  double total = 0.0;
  for (std::size_t t = 0; t < a.points.size(); ++t) total += great_circle(a.points[t], b.points[t]);
  return total / static_cast<double>(a.points.size());
}

std::vector<double> unwrap_longitude(std::span<const double> theta) {
  std::vector<double> out(theta.begin(), theta.end());
  double offset = 0.0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double step = theta[i] - theta[i - 1];
    if (step > kPi) offset -= kTwoPi;
    else if (step < -kPi) offset += kTwoPi;
    out[i] = theta[i] + offset;
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("correlation inputs differ in length");
  if (x.size() < 2) throw ShapeError("correlation needs at least two samples");
  // Checked on the raw values: the mean of a constant series can carry rounding residue.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) throw DegenerateSeries("correlation of a constant series");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateSeries("correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double tc(const Scanpath& a, const Scanpath& b) {
  require_same_length(a, b);
  if (a.points.size() < 3) throw ShapeError("temporal correlation needs at least 3 viewpoints");
  std::vector<double> pa, pb, ta, tb;
  for (std::size_t t = 0; t < a.points.size(); ++t) {
    pa.push_back(a.points[t].phi);
    pb.push_back(b.points[t].phi);
    ta.push_back(a.points[t].theta);
    tb.push_back(b.points[t].theta);
  }
  return 0.5 * (pearson(pa, pb) + pearson(unwrap_longitude(ta), unwrap_longitude(tb)));
}

SetMetric min_od(std::span<const Scanpath> a, std::span<const Scanpath> b) {
  require_sets(a, b);
  SetMetric out;
  out.value = std::numeric_limits<double>::infinity();
  out.table.assign(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = od(a[i], b[j]);
      out.table[i][j] = d;
      if (d < out.value) {
        out.value = d;
        out.best_a = static_cast<int>(i);
        out.best_b = static_cast<int>(j);
      }
    }
  }
  return out;
}

SetMetric max_tc(std::span<const Scanpath> a, std::span<const Scanpath> b) {
  require_sets(a, b);
  SetMetric out;
  out.value = -std::numeric_limits<double>::infinity();
  out.table.assign(a.size(), std::vector<double>(b.size(), std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double c;
      try {
        c = tc(a[i], b[j]);
      } catch (const DegenerateSeries&) {
        ++out.degenerate_pairs;
        continue;
      }
      out.table[i][j] = c;
      if (c > out.value) {
        out.value = c;
        out.best_a = static_cast<int>(i);
        out.best_b = static_cast<int>(j);
      }
    }
  }
  if (out.best_a < 0) throw DegenerateSeries("every scanpath pair has a constant coordinate series");
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 3) throw ShapeError("SRCC needs at least 3 samples");
  return pearson(average_ranks(x), average_ranks(y));
}

double logistic4(double q, const std::array<double, 4>& b) {
  return (b[0] - b[1]) / (1.0 + std::exp(-(q - b[2]) / std::abs(b[3]))) + b[1];
}

LogisticFit plcc_logistic(std::span<const double> pred, std::span<const double> labels, int max_iterations) {
  if (pred.size() != labels.size()) throw ShapeError("prediction and label counts differ");
  if (pred.size() < 5) throw ShapeError("logistic fitting needs at least 5 samples");
  const std::size_t n = pred.size();
  LogisticFit fit;
  fit.raw_plcc = pearson(pred, labels);

  const double lo = *std::min_element(labels.begin(), labels.end());
  const double hi = *std::max_element(labels.begin(), labels.end());
  const double mean_pred = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  double sd = 0.0;
  for (double p : pred) sd += (p - mean_pred) * (p - mean_pred);
  sd = std::sqrt(sd / static_cast<double>(n));
  if (!(sd > 0.0)) sd = 1.0;
  std::array<double, 4> beta = fit.raw_plcc >= 0.0 ? std::array<double, 4>{hi, lo, median({pred.begin(), pred.end()}), sd}
                                                   : std::array<double, 4>{lo, hi, median({pred.begin(), pred.end()}), sd};

  auto residual_sse = [&](const std::array<double, 4>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = logistic4(pred[i], b) - labels[i];
      s += r * r;
    }
    return s;
  };

  double lambda = 1e-3;
  double current = residual_sse(beta);
  for (fit.iterations = 0; fit.iterations < max_iterations; ++fit.iterations) {
    Eigen::MatrixXd jac(n, 4);
    Eigen::VectorXd res(n);
    const double s4 = std::abs(beta[3]);
    const double sgn4 = beta[3] >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (pred[i] - beta[2]) / s4;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double dsig = sig * (1.0 - sig);
      res(i) = logistic4(pred[i], beta) - labels[i];
      jac(i, 0) = sig;
      jac(i, 1) = 1.0 - sig;
      jac(i, 2) = -(beta[0] - beta[1]) * dsig / s4;
      jac(i, 3) = -(beta[0] - beta[1]) * dsig * z / s4 * sgn4;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * res;
    bool improved = false;
    while (lambda < 1e12) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += lambda * (jtj.diagonal().array() + 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(-jtr);
      std::array<double, 4> trial = beta;
      for (int k = 0; k < 4; ++k) trial[k] += step(k);
      const double t = std::isfinite(trial[3]) && trial[3] != 0.0 ? residual_sse(trial) : std::numeric_limits<double>::infinity();
      if (std::isfinite(t) && t < current) {
        const double rel = (current - t) / std::max(current, 1e-300);
        beta = trial;
        current = t;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (rel < 1e-12) fit.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      fit.converged = true;  // no descent direction left: stationary point
      break;
    }
    if (fit.converged) break;
  }
  fit.beta = beta;

  bool finite = std::isfinite(current);
  for (double b : beta) finite = finite && std::isfinite(b);
  if (!finite) {
    fit.fallback = true;
    fit.plcc = fit.raw_plcc;
    return fit;
  }

  std::vector<double> mapped(n);
  for (std::size_t i = 0; i < n; ++i) mapped[i] = logistic4(pred[i], beta);

  // Best affine map of the predictions: the logistic family's limit as |beta4| grows.
  double mean_label = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (pred[i] - mean_pred) * (labels[i] - mean_label);
    sxx += (pred[i] - mean_pred) * (pred[i] - mean_pred);
  }
  std::vector<double> affine(n);
  for (std::size_t i = 0; i < n; ++i) affine[i] = mean_label + sxy / sxx * (pred[i] - mean_pred);

  double mapped_plcc = -2.0;
  try {
    mapped_plcc = pearson(mapped, labels);
  } catch (const DegenerateSeries&) {
  }
  if (sse(mapped, labels) > sse(affine, labels) || mapped_plcc < std::abs(fit.raw_plcc)) {
    fit.affine_limit = true;
    fit.plcc = std::abs(fit.raw_plcc);
  } else {
    fit.plcc = mapped_plcc;
  }
  return fit;
}

Eigen::MatrixXd saliency_from_scanpaths(std::span<const Scanpath> paths, int erp_height, int erp_width,
                                        double kernel_deg) {
  if (paths.empty()) throw EmptyPath("no scanpaths for the saliency map");
  if (erp_height < 1 || erp_width < 1) throw ShapeError("heatmap dimensions must be positive");
  if (!(kernel_deg > 0.0)) throw ConfigError("kernel width must be positive");
  const double sigma = kernel_deg * kPi / 180.0;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  std::vector<Eigen::Vector3d> centers;
  for (const auto& p : paths) {
    for (const auto& vp : p.points) centers.push_back(euler_to_cartesian(vp, 1.0));
  }
  if (centers.empty()) throw EmptyPath("scanpaths hold no viewpoints");

  Eigen::MatrixXd map(erp_height, erp_width);
  for (int m = 0; m < erp_height; ++m) {
    const double phi = (0.5 - (m + 0.5) / erp_height) * kPi;
    const double solid_angle = std::cos(phi);
    for (int n = 0; n < erp_width; ++n) {
      const double theta = ((n + 0.5) / erp_width - 0.5) * kTwoPi;
      const Eigen::Vector3d x = euler_to_cartesian({phi, theta}, 1.0);
      double acc = 0.0;
      for (const auto& c : centers) {
        const double d = std::atan2(x.cross(c).norm(), x.dot(c));
        acc += std::exp(-d * d * inv2s2);
      }
      map(m, n) = acc * solid_angle;
    }
  }
  const double total = map.sum();
  if (!(total > 0.0)) throw DegenerateSeries("saliency map has zero mass");
  return map / total;
}

void write_heatmap(const Eigen::MatrixXd& heatmap, const std::filesystem::path& pgm_path, double kernel_deg) {
  constexpr int kMaxval = 65535;
  write_pgm(heatmap, pgm_path, kMaxval);
  const double peak = heatmap.maxCoeff();
  nlohmann::ordered_json meta = {{"height", heatmap.rows()},
                                 {"width", heatmap.cols()},
                                 {"kernel_deg", kernel_deg},
                                 {"sum", heatmap.sum()},
                                 {"max", peak},
                                 {"pgm_maxval", kMaxval},
                                 {"value_per_level", peak / kMaxval}};
  std::filesystem::path sidecar = pgm_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << meta.dump(2) << '\n';
}

}  // namespace panoscan
