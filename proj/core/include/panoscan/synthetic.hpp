#pragma once

// Synthetic stand-ins for recorded data: scanpaths from a known step
// distribution, and panoramic videos with localized distortions and quality
// labels.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panoscan/generator.hpp"
#include "panoscan/gmm.hpp"
#include "panoscan/image.hpp"

namespace panoscan {

/// Scanpaths that move by uv steps drawn from `step` in the viewport frame
/// centered at the current viewpoint.
struct SyntheticScanpathModel {
  GmmParams step;
  ViewportSpec spec;
  double rate_hz = kScanpathRateHz;
  double start_lat_range = 0.6;  // start phi uniform in [-range, range]

  /// Two components, separated by more than 3 sigma on the u axis.
  static SyntheticScanpathModel standard();
  void validate() const;
};

/// Path i draws from stream (seed, i).
std::vector<Scanpath> synth_scanpaths(const SyntheticScanpathModel& model, int n_paths, int length, std::uint64_t seed);

/// One step draw; exposed for oracle tests.
UVPoint sample_step(const GmmParams& g, RngStream& rng);

struct OracleEstimate {
  double bits = 0.0;      // mean code length per step
  double std_error = 0.0;
  int samples = 0;
};

/// Monte Carlo cross-entropy of quantized steps under the true model.
OracleEstimate oracle_code_length(const SyntheticScanpathModel& model, const QuantizerSpec& q, int samples,
                                  std::uint64_t seed);

enum class DistortionKind { kBlur, kNoise };

struct QualityVideoSpec {
  Viewpoint patch_center;
  double patch_radius = 0.8;  // rad, std of the soft patch mask
  DistortionKind kind = DistortionKind::kNoise;
  double magnitude = 0.0;     // in [0, 1]
  std::uint64_t texture_seed = 0;
};

struct QualityTaskGeometry {
  int erp_height = 64;
  int erp_width = 128;
  int frames = 4;
  double fps = 0.5;
  Viewpoint view_center;       // where synthetic viewers look
  double view_spread = 0.35;   // rad, std of the viewing density
  double patch_radius = 0.8;   // rad, applied to every generated video
  double clean_label = 1.0;
  double label_span = 0.9;     // label = clean - span * magnitude * relative coverage
};

/// Coverage of the patch mask under the viewing density, relative to a patch centered on the view center.
double relative_coverage(const QualityVideoSpec& v, const QualityTaskGeometry& geo);
double quality_label(const QualityVideoSpec& v, const QualityTaskGeometry& geo);
Video render_quality_video(const QualityVideoSpec& v, const QualityTaskGeometry& geo);

struct LabeledVideo {
  std::string name;
  Video video;
  double label = 0.0;
  QualityVideoSpec spec;
};

/// `count` videos whose magnitudes sweep [0, 1] and whose patches sit within
/// about 0.8 rad of the view center; deterministic per seed.
std::vector<LabeledVideo> synth_quality_dataset(std::uint64_t seed, int count = 64, const QualityTaskGeometry& geo = {});

/// Writes videos/<name>/frame_*.ppm + video.json and labels.json.
void save_quality_dataset(const std::vector<LabeledVideo>& videos, const std::filesystem::path& dir);
std::vector<LabeledVideo> load_quality_dataset(const std::filesystem::path& dir);

}  // namespace panoscan
