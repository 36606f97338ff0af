#include "panoscan/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "panoscan/errors.hpp"
#include "panoscan/rng.hpp"

namespace panoscan {

namespace fs = std::filesystem;

SyntheticScanpathModel SyntheticScanpathModel::standard() {
  SyntheticScanpathModel m;
  m.step.weights = {0.6, 0.4};
  m.step.means = {{3.0, 0.5}, {-2.5, -0.5}};
  m.step.sigmas = {{1.0, 0.8}, {1.2, 1.0}};
  return m;
}

void SyntheticScanpathModel::validate() const {
  step.validate();
  spec.validate();
  if (!(rate_hz > 0.0)) throw ConfigError("rate must be positive");
  if (!(start_lat_range >= 0.0 && start_lat_range < kPi / 2.0)) throw ConfigError("start latitude range out of bounds");
}

UVPoint sample_step(const GmmParams& g, RngStream& rng) {
  const double u = rng.uniform();
  int k = 0;
  double acc = g.weights[0];
  while (u > acc && k + 1 < g.components()) acc += g.weights[++k];
  const double eu = rng.normal();
  const double ev = rng.normal();
  return {g.means[k].u + g.sigmas[k].u * eu, g.means[k].v + g.sigmas[k].v * ev};
}

std::vector<Scanpath> synth_scanpaths(const SyntheticScanpathModel& model, int n_paths, int length, std::uint64_t seed) {
  model.validate();
  if (n_paths < 0 || length < 1) throw ConfigError("synthetic path count and length must be positive");
  std::vector<Scanpath> paths(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    Scanpath& p = paths[i];
    p.rate_hz = model.rate_hz;
    Viewpoint vp{model.start_lat_range * (2.0 * rng.uniform() - 1.0), kPi * (2.0 * rng.uniform() - 1.0)};
    vp = vp.normalized();
    p.points.push_back(vp);
    for (int t = 1; t < length; ++t) {
      vp = viewport_to_sphere(sample_step(model.step, rng), vp, model.spec);
      p.points.push_back(vp);
    }
  }
  return paths;
}

OracleEstimate oracle_code_length(const SyntheticScanpathModel& model, const QuantizerSpec& q, int samples,
                                  std::uint64_t seed) {
  model.validate();
  if (samples < 2) throw ConfigError("oracle needs at least two samples");
  RngStream rng(seed, 0x6f7261636cULL);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double bits = code_length(model.step, sample_step(model.step, rng), q);
    sum += bits;
    sum2 += bits * bits;
  }
  OracleEstimate e;
  e.samples = samples;
  e.bits = sum / samples;
  const double var = std::max(0.0, (sum2 - samples * e.bits * e.bits) / (samples - 1));
  e.std_error = std::sqrt(var / samples);
  return e;
}

namespace {

struct PixelGrid {
  std::vector<double> phi, theta;
  std::vector<Eigen::Vector3d> dirs;  // row-major
};

PixelGrid pixel_grid(int he, int we) {
  PixelGrid g;
  for (int m = 0; m < he; ++m) g.phi.push_back((0.5 - (m + 0.5) / he) * kPi);
  for (int n = 0; n < we; ++n) g.theta.push_back(((n + 0.5) / we - 0.5) * kTwoPi);
  for (int m = 0; m < he; ++m) {
    for (int n = 0; n < we; ++n) g.dirs.push_back(euler_to_cartesian({g.phi[m], g.theta[n]}, 1.0));
  }
  return g;
}

double gauss_weight(const Eigen::Vector3d& x, const Eigen::Vector3d& c, double sigma) {
  const double d = std::atan2(x.cross(c).norm(), x.dot(c));
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

double coverage(const Viewpoint& patch, double radius, const QualityTaskGeometry& geo) {
  const PixelGrid g = pixel_grid(geo.erp_height, geo.erp_width);
  const Eigen::Vector3d pc = euler_to_cartesian(patch, 1.0);
  const Eigen::Vector3d vc = euler_to_cartesian(geo.view_center, 1.0);
  double num = 0.0, den = 0.0;
  for (int m = 0; m < geo.erp_height; ++m) {
    const double area = std::cos(g.phi[m]);
    for (int n = 0; n < geo.erp_width; ++n) {
      const auto& x = g.dirs[static_cast<std::size_t>(m) * geo.erp_width + n];
      const double view = gauss_weight(x, vc, geo.view_spread) * area;
      num += view * gauss_weight(x, pc, radius);
      den += view;
    }
  }
  return num / den;
}

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

double relative_coverage(const QualityVideoSpec& v, const QualityTaskGeometry& geo) {
  return coverage(v.patch_center, v.patch_radius, geo) / coverage(geo.view_center, v.patch_radius, geo);
}

double quality_label(const QualityVideoSpec& v, const QualityTaskGeometry& geo) {
  if (!(v.magnitude >= 0.0 && v.magnitude <= 1.0)) throw ConfigError("distortion magnitude must lie in [0, 1]");
  if (v.magnitude == 0.0) return geo.clean_label;
  return geo.clean_label - geo.label_span * v.magnitude * relative_coverage(v, geo);
}

Video render_quality_video(const QualityVideoSpec& v, const QualityTaskGeometry& geo) {
  const int he = geo.erp_height, we = geo.erp_width;
  if (he < 2 || we < 2 || geo.frames < 1) throw ConfigError("quality video geometry must be at least 2x2 with one frame");
  const PixelGrid g = pixel_grid(he, we);
  RngStream tex(v.texture_seed, 0);

  // Sum of sinusoids, periodic in longitude. The frequencies are shared by
  // every video and only the phases vary, so clean textures have the same
  // gradient statistics and distortions stand out.
  struct Wave {
    int kn, km;
    double phase, amp;
  };
  static constexpr int kFreq[6][2] = {{3, 1}, {6, 3}, {11, 2}, {22, 7}, {27, 11}, {31, 5}};
  std::vector<Wave> waves[3];
  for (int c = 0; c < 3; ++c) {
    for (int w = 0; w < 6; ++w) {
      const auto& f = kFreq[(w + 2 * c) % 6];
      waves[c].push_back({f[0], f[1], kTwoPi * tex.uniform(), 0.08});
    }
  }
  std::vector<double> mask(static_cast<std::size_t>(he) * we);
  const Eigen::Vector3d pc = euler_to_cartesian(v.patch_center, 1.0);
  for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = gauss_weight(g.dirs[p], pc, v.patch_radius);

  Video video;
  video.fps = geo.fps;
  for (int f = 0; f < geo.frames; ++f) {
    Image img(he, we);
    for (int m = 0; m < he; ++m) {
      for (int n = 0; n < we; ++n) {
        for (int c = 0; c < 3; ++c) {
          double val = 0.5;
          for (const auto& w : waves[c]) val += w.amp * std::sin(w.kn * g.theta[n] + 2.0 * w.km * g.phi[m] + w.phase + 0.15 * f);
          img.at(m, n, c) = std::clamp(val, 0.0, 1.0);
        }
      }
    }
    if (v.magnitude > 0.0) {
      if (v.kind == DistortionKind::kBlur) {
        Image blurred(he, we);
        constexpr int kRadius = 2;
        for (int m = 0; m < he; ++m) {
          for (int n = 0; n < we; ++n) {
            for (int c = 0; c < 3; ++c) {
              double acc = 0.0;
              for (int dm = -kRadius; dm <= kRadius; ++dm) {
                const int mm = std::clamp(m + dm, 0, he - 1);
                for (int dn = -kRadius; dn <= kRadius; ++dn) acc += img.at(mm, ((n + dn) % we + we) % we, c);
              }
              blurred.at(m, n, c) = acc / ((2 * kRadius + 1) * (2 * kRadius + 1));
            }
          }
        }
        for (Eigen::Index p = 0; p < img.rgb.rows(); ++p) {
          const double a = v.magnitude * mask[p];
          img.rgb.row(p) = (1.0 - a) * img.rgb.row(p) + a * blurred.rgb.row(p);
        }
      } else {
        RngStream noise(v.texture_seed, 1 + static_cast<std::uint64_t>(f));
        for (Eigen::Index p = 0; p < img.rgb.rows(); ++p) {
          for (int c = 0; c < 3; ++c) img.rgb(p, c) += 0.5 * v.magnitude * mask[p] * (2.0 * noise.uniform() - 1.0);
        }
      }
    }
    img.rgb = img.rgb.unaryExpr([](double x) { return quantize8(x); });
    video.frames.push_back(std::move(img));
  }
  return video;
}

std::vector<LabeledVideo> synth_quality_dataset(std::uint64_t seed, int count, const QualityTaskGeometry& geo) {
  if (count < 1) throw ConfigError("dataset size must be positive");
  RngStream rng(seed, 0x71756c6974ULL);
  // Magnitudes sweep [0, 1]; their order is shuffled so splits see the full range.
  std::vector<double> magnitudes(count);
  for (int i = 0; i < count; ++i) magnitudes[i] = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
  for (int i = count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(magnitudes[i], magnitudes[j]);
  }
  std::vector<LabeledVideo> out;
  for (int i = 0; i < count; ++i) {
    QualityVideoSpec s;
    s.patch_center = Viewpoint{geo.view_center.phi + 0.5 * (2.0 * rng.uniform() - 1.0),
                               geo.view_center.theta + 0.8 * (2.0 * rng.uniform() - 1.0)}
                         .normalized();
    s.patch_radius = geo.patch_radius;
    s.kind = rng.uniform() < 0.5 ? DistortionKind::kBlur : DistortionKind::kNoise;
    s.magnitude = magnitudes[i];
    s.texture_seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(i) + 1));
    char name[32];
    std::snprintf(name, sizeof name, "video_%03d", i);
    out.push_back({name, render_quality_video(s, geo), quality_label(s, geo), s});
  }
  return out;
}

void save_quality_dataset(const std::vector<LabeledVideo>& videos, const fs::path& dir) {
  fs::create_directories(dir / "videos");
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (const auto& v : videos) {
    save_video(v.video, dir / "videos" / v.name);
    labels.push_back({{"name", v.name},
                      {"label", v.label},
                      {"magnitude", v.spec.magnitude},
                      {"kind", v.spec.kind == DistortionKind::kBlur ? "blur" : "noise"},
                      {"patch_phi", v.spec.patch_center.phi},
                      {"patch_theta", v.spec.patch_center.theta}});
  }
  std::ofstream out(dir / "labels.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "labels.json").string());
  out << labels.dump(2) << '\n';
}

std::vector<LabeledVideo> load_quality_dataset(const fs::path& dir) {
  std::ifstream in(dir / "labels.json");
  if (!in) throw IoError("cannot open " + (dir / "labels.json").string());
  nlohmann::json labels;
  try {
    labels = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "labels.json").string() + ": " + e.what());
  }
  std::vector<LabeledVideo> out;
  for (const auto& entry : labels) {
    LabeledVideo v;
    try {
      v.name = entry.at("name").get<std::string>();
      v.label = entry.at("label").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "labels.json").string() + ": " + e.what());
    }
    v.video = load_video(dir / "videos" / v.name);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace panoscan
