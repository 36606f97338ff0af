#pragma once

// RGB images with values in [0, 1], stored one pixel per row of an
// (height*width) x 3 matrix in row-major pixel order. ERP frames and rendered
// viewports share this layout, which is also the layout of image Vars on the tape.

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace panoscan {

struct Image {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd rgb;  // (height * width) x 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h) * w, 3)) {}

  static Image constant(int h, int w, double r, double g, double b);

  Eigen::Index index(int row, int col) const { return static_cast<Eigen::Index>(row) * width + col; }
  double& at(int row, int col, int channel) { return rgb(index(row, col), channel); }
  double at(int row, int col, int channel) const { return rgb(index(row, col), channel); }
  bool empty() const { return height == 0 || width == 0; }
};

using ErpFrame = Image;

/// Ordered ERP frames. fps == 0 marks a still panorama.
struct Video {
  std::vector<ErpFrame> frames;
  double fps = 0.0;
};

/// Binary PPM (P6, maxval 255). Throws IoError / FormatError naming the file.
Image read_ppm(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to the nearest of 256 levels.
void write_ppm(const Image& img, const std::filesystem::path& path);

/// Binary PGM (P5) of a single-channel matrix scaled so its maximum maps to maxval.
void write_pgm(const Eigen::MatrixXd& values, const std::filesystem::path& path, int maxval = 65535);

inline constexpr const char* kVideoSidecar = "video.json";

std::string frame_filename(int one_based_index);

/// A directory of frame_000001.ppm... with video.json {"fps": real}, or a
/// single PPM file loaded as a still panorama.
Video load_video(const std::filesystem::path& path);
void save_video(const Video& video, const std::filesystem::path& dir);

}  // namespace panoscan
