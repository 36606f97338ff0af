#pragma once

// Binary tensor container shared by generator and assessor checkpoints:
//
//   magic      6 bytes ("PSCN1\0", "PSQA1\0", ...)
//   u64 LE     length of the JSON header in bytes
//   JSON       {"meta": {...}, "tensors": [{"name", "shape": [rows, cols], "byte_offset"}, ...]}
//   payload    row-major little-endian float64 data, tensors back to back
//   u32 LE     CRC32 of the payload

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace panoscan {

using NamedTensor = std::pair<std::string, Eigen::MatrixXd>;

struct TensorFile {
  nlohmann::ordered_json meta;
  std::vector<NamedTensor> tensors;
};

inline constexpr std::string_view kGeneratorMagic{"PSCN1\0", 6};
inline constexpr std::string_view kAssessorMagic{"PSQA1\0", 6};

std::string encode_tensor_file(std::string_view magic, const TensorFile& file);
TensorFile decode_tensor_file(std::string_view magic, std::string_view bytes);

void write_tensor_file(const std::filesystem::path& path, std::string_view magic, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path, std::string_view magic);

std::uint32_t crc32_of(std::string_view bytes);

}  // namespace panoscan
