#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "panoscan/config.hpp"
#include "panoscan/errors.hpp"
#include "panoscan/image.hpp"
#include "panoscan/scanpath_io.hpp"
#include "test_util.hpp"

using namespace panoscan;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ScanpathIo, RoundTripIsExact) {
  RngStream rng(91, 0);
  std::vector<Scanpath> paths(3);
  for (auto& p : paths) {
    for (int i = 0; i < 35; ++i) p.points.push_back(test::random_viewpoint(rng));
  }
  const std::string text = encode_scanpaths(paths);
  std::istringstream in(text);
  const auto back = decode_scanpaths(in);
  ASSERT_EQ(back.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    ASSERT_EQ(back[k].points.size(), 35u);
    EXPECT_DOUBLE_EQ(back[k].rate_hz, 5.0);
    for (int i = 0; i < 35; ++i) {
      ASSERT_EQ(back[k].points[i].phi, paths[k].points[i].phi);
      ASSERT_EQ(back[k].points[i].theta, paths[k].points[i].theta);
    }
  }
  EXPECT_EQ(encode_scanpaths(back), text);
}

TEST(ScanpathIo, FileRoundTrip) {
  const auto dir = test::scratch_dir("scanpath_io");
  std::vector<Scanpath> paths(1);
  paths[0].points = {{0.1, 0.2}, {0.3, -0.4}};
  write_scanpaths(paths, dir / "p.jsonl");
  const auto back = read_scanpaths(dir / "p.jsonl");
  EXPECT_EQ(back[0].points[1].theta, -0.4);
  EXPECT_THROW(read_scanpaths(dir / "missing.jsonl"), IoError);
}

TEST(ScanpathIo, FormatDouble) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(ScanpathIo, OrdersByPathIdAndRejectsBadLines) {
  std::istringstream in(
      "{\"path_id\":1,\"t\":0,\"phi\":0.5,\"theta\":0}\n"
      "{\"path_id\":0,\"t\":0,\"phi\":0.1,\"theta\":0}\n"
      "{\"path_id\":0,\"t\":0.2,\"phi\":0.2,\"theta\":0}\n");
  const auto paths = decode_scanpaths(in);
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0].points.size(), 2u);
  EXPECT_EQ(paths[1].points[0].phi, 0.5);

  std::istringstream bad("{\"path_id\":0,\"t\":0,\"phi\":0.1,\"theta\":0}\nnot json\n");
  const std::string msg = message_of([&] { decode_scanpaths(bad, "x.jsonl"); });
  EXPECT_NE(msg.find("x.jsonl:2"), std::string::npos) << msg;

  std::istringstream missing("{\"path_id\":0,\"t\":0,\"phi\":0.1}\n");
  EXPECT_THROW(decode_scanpaths(missing), FormatError);
  std::istringstream uneven(
      "{\"path_id\":0,\"t\":0,\"phi\":0,\"theta\":0}\n"
      "{\"path_id\":0,\"t\":0.2,\"phi\":0,\"theta\":0}\n"
      "{\"path_id\":0,\"t\":0.7,\"phi\":0,\"theta\":0}\n");
  EXPECT_THROW(decode_scanpaths(uneven), FormatError);
}

TEST(Ppm, RoundTripQuantizesTo256Levels) {
  const auto dir = test::scratch_dir("ppm");
  Image img(3, 4);
  for (Eigen::Index i = 0; i < img.rgb.size(); ++i) img.rgb(i) = (i % 256) / 255.0;
  img.rgb(0, 0) = 1.7;   // clamped
  img.rgb(1, 1) = -0.2;  // clamped
  write_ppm(img, dir / "a.ppm");
  const Image back = read_ppm(dir / "a.ppm");
  ASSERT_EQ(back.height, 3);
  ASSERT_EQ(back.width, 4);
  EXPECT_EQ(back.rgb(0, 0), 1.0);
  EXPECT_EQ(back.rgb(1, 1), 0.0);
  for (Eigen::Index i = 2; i < img.rgb.rows(); ++i) EXPECT_NEAR(back.rgb(i, 2), img.rgb(i, 2), 1e-12);
}

TEST(Ppm, ErrorsNameTheFile) {
  const auto dir = test::scratch_dir("ppm_err");
  std::ofstream(dir / "bad.ppm") << "P3\n2 2\n255\n";
  std::string msg = message_of([&] { read_ppm(dir / "bad.ppm"); });
  EXPECT_NE(msg.find("bad.ppm"), std::string::npos);
  EXPECT_THROW(read_ppm(dir / "bad.ppm"), FormatError);
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n2 2\n255\nabc";
  EXPECT_THROW(read_ppm(dir / "short.ppm"), FormatError);
  msg = message_of([&] { read_ppm(dir / "none.ppm"); });
  EXPECT_NE(msg.find("none.ppm"), std::string::npos);
  EXPECT_THROW(read_ppm(dir / "none.ppm"), IoError);
}

TEST(Video, DirectoryAndStill) {
  const auto dir = test::scratch_dir("video");
  Video v;
  v.fps = 2.5;
  for (int i = 0; i < 3; ++i) v.frames.push_back(Image::constant(4, 8, 0.0, i / 255.0, 1.0));
  save_video(v, dir / "clip");
  EXPECT_TRUE(std::filesystem::exists(dir / "clip" / frame_filename(1)));
  EXPECT_EQ(frame_filename(12), "frame_000012.ppm");
  const Video back = load_video(dir / "clip");
  EXPECT_EQ(back.fps, 2.5);
  ASSERT_EQ(back.frames.size(), 3u);
  EXPECT_NEAR(back.frames[2].rgb(0, 1), 2 / 255.0, 1e-12);

  const Video still = load_video(dir / "clip" / frame_filename(2));
  EXPECT_EQ(still.fps, 0.0);
  EXPECT_EQ(still.frames.size(), 1u);

  std::filesystem::create_directories(dir / "empty");
  EXPECT_ANY_THROW(load_video(dir / "empty"));
  EXPECT_ANY_THROW(load_video(dir / "nothing"));
}

TEST(Config, DefaultsValidate) {
  const RunConfig cfg = parse_config(nlohmann::json::object());
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.generation.n_paths, 20);
  EXPECT_EQ(cfg.renderer.sequence_length, 7);
  EXPECT_EQ(cfg.training.quantizer_step, 0.2);
  EXPECT_EQ(cfg.generation.hyper, NetHyper{});
}

TEST(Config, OverlaysAndDegreeKeys) {
  const auto doc = nlohmann::json::parse(R"({
    "seed": 9,
    "generation": {"n_paths": 3, "start_phi_deg": 90, "start_theta": 0.5},
    "renderer": {"fov_deg": 60}
  })");
  const RunConfig cfg = parse_config(doc);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.generation.n_paths, 3);
  EXPECT_NEAR(cfg.generation.start.phi, kPi / 2, 1e-15);
  EXPECT_EQ(cfg.generation.start.theta, 0.5);
  EXPECT_NEAR(cfg.renderer.fov_rad, kPi / 3, 1e-15);
  EXPECT_EQ(cfg.generation_config().seed, 9u);
  // The canonical dump parses back to the same configuration.
  const RunConfig again = parse_config(nlohmann::json::parse(config_to_json(cfg).dump()));
  EXPECT_EQ(config_to_json(again), config_to_json(cfg));
}

TEST(Config, RejectsBadDocuments) {
  auto err = [](const char* text) {
    return message_of([&] { parse_config(nlohmann::json::parse(text)); });
  };
  EXPECT_NE(err(R"({"generation": {"n_pathz": 3}})").find("n_pathz"), std::string::npos);
  EXPECT_NE(err(R"({"bogus": {}})").find("bogus"), std::string::npos);
  EXPECT_FALSE(err(R"({"generation": {"start_phi": 0.1, "start_phi_deg": 5}})").empty());
  EXPECT_FALSE(err(R"({"generation": {"n_paths": "three"}})").empty());
  EXPECT_FALSE(err(R"({"generation": {"n_paths": 0}})").empty());
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"renderer": {"fov": -1}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

TEST(Config, HelpListsEveryKey) {
  const std::string help = config_help();
  for (const char* key : {"seed", "n_paths", "start_phi", "duration_s", "quantizer_step", "stage1_lr", "kernel_deg",
                          "sequence_length", "logistic_iterations"}) {
    EXPECT_NE(help.find(key), std::string::npos) << key;
  }
}
