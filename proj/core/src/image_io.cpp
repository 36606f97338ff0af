#include "panoscan/image.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "panoscan/errors.hpp"

namespace panoscan {

namespace fs = std::filesystem;

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string header_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError(path.string() + ": truncated PPM header");
  return tok;
}

int header_int(std::istream& in, const fs::path& path) {
  const std::string tok = header_token(in, path);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      tok.size() > 9) {
    throw FormatError(path.string() + ": bad PPM header field '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

Image Image::constant(int h, int w, double r, double g, double b) {
  Image img(h, w);
  img.rgb.col(0).setConstant(r);
  img.rgb.col(1).setConstant(g);
  img.rgb.col(2).setConstant(b);
  return img;
}

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (header_token(in, path) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const int width = header_int(in, path);
  const int height = header_int(in, path);
  const int maxval = header_int(in, path);
  // header_token consumed exactly one whitespace byte after maxval.
  if (width < 1 || height < 1 || maxval != 255) {
    throw FormatError(path.string() + ": unsupported PPM geometry or maxval");
  }
  const std::size_t count = static_cast<std::size_t>(width) * height * 3;
  std::vector<unsigned char> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) throw FormatError(path.string() + ": truncated PPM payload");
  Image img(height, width);
  for (std::size_t i = 0; i < count; ++i) img.rgb(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = bytes[i] / 255.0;
  return img;
}

void write_ppm(const Image& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.rgb.size()));
  for (Eigen::Index p = 0; p < img.rgb.rows(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(img.rgb(p, c), 0.0, 1.0);
      bytes[static_cast<std::size_t>(p) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pgm(const Eigen::MatrixXd& values, const fs::path& path, int maxval) {
  if (maxval < 1 || maxval > 65535) throw ConfigError("PGM maxval must be in [1, 65535]");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << values.cols() << ' ' << values.rows() << '\n' << maxval << '\n';
  const double peak = values.size() > 0 ? values.maxCoeff() : 0.0;
  const double scale = peak > 0.0 ? maxval / peak : 0.0;
  std::string bytes;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const long level = std::clamp(std::lround(values(r, c) * scale), 0L, static_cast<long>(maxval));
      if (maxval > 255) bytes.push_back(static_cast<char>((level >> 8) & 0xFF));
      bytes.push_back(static_cast<char>(level & 0xFF));
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::string frame_filename(int one_based_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.ppm", one_based_index);
  return buf;
}

Video load_video(const fs::path& path) {
  Video video;
  if (fs::is_regular_file(path)) {
    video.frames.push_back(read_ppm(path));
    return video;
  }
  if (!fs::is_directory(path)) throw IoError("no frames at " + path.string());
  for (int i = 1;; ++i) {
    const fs::path frame = path / frame_filename(i);
    if (!fs::exists(frame)) break;
    video.frames.push_back(read_ppm(frame));
  }
  if (video.frames.empty()) throw IoError(path.string() + ": no frame_000001.ppm");
  const fs::path sidecar = path / kVideoSidecar;
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    try {
      const auto meta = nlohmann::json::parse(in);
      video.fps = meta.at("fps").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(sidecar.string() + ": " + e.what());
    }
    if (!(video.fps >= 0.0) || !std::isfinite(video.fps)) throw FormatError(sidecar.string() + ": fps must be finite and >= 0");
  } else if (video.frames.size() > 1) {
    throw IoError(sidecar.string() + " is required for multi-frame videos");
  }
  return video;
}

void save_video(const Video& video, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < video.frames.size(); ++i) write_ppm(video.frames[i], dir / frame_filename(static_cast<int>(i) + 1));
  std::ofstream out(dir / kVideoSidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / kVideoSidecar).string());
  out << nlohmann::json{{"fps", video.fps}}.dump() << '\n';
}

}  // namespace panoscan
