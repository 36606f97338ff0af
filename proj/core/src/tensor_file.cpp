#include "panoscan/tensor_file.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "panoscan/errors.hpp"

namespace panoscan {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

constexpr std::size_t kMagicSize = 6;

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string encode_tensor_file(std::string_view magic, const TensorFile& file) {
  if (magic.size() != kMagicSize) throw FormatError("magic must be 6 bytes");
  nlohmann::ordered_json header;
  header["meta"] = file.meta;
  header["tensors"] = nlohmann::ordered_json::array();

  std::string payload;
  for (const auto& [name, m] : file.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"byte_offset", payload.size()}});
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(payload, m(r, c));
    }
  }
  const std::string header_text = header.dump();

  std::string out(magic);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;
  put<std::uint32_t>(out, crc32_of(payload));
  return out;
}

TensorFile decode_tensor_file(std::string_view magic, std::string_view bytes) {
  if (bytes.size() < kMagicSize) throw TruncationError("file ends inside the magic bytes");
  if (bytes.substr(0, kMagicSize) != magic) throw MagicError("unexpected magic bytes");
  if (bytes.size() < kMagicSize + 8) throw TruncationError("file ends inside the header length");
  const auto header_len = get<std::uint64_t>(bytes, kMagicSize);
  const std::size_t header_begin = kMagicSize + 8;
  if (header_len > bytes.size() - header_begin) throw TruncationError("file ends inside the JSON header");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(header_begin, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array()) {
    throw HeaderError("checkpoint header lacks a tensor list");
  }

  const std::size_t payload_begin = header_begin + header_len;
  std::size_t payload_size = 0;
  TensorFile file;
  file.meta = header.value("meta", nlohmann::ordered_json::object());
  try {
    for (const auto& entry : header["tensors"]) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<std::int64_t>();
      const auto cols = entry.at("shape").at(1).get<std::int64_t>();
      const auto offset = entry.at("byte_offset").get<std::uint64_t>();
      if (rows < 0 || cols < 0 || offset != payload_size) throw HeaderError("inconsistent tensor entry '" + name + "'");
      const std::size_t nbytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      if (payload_begin + offset + nbytes > bytes.size()) throw TruncationError("payload truncated in '" + name + "'");
      Eigen::MatrixXd m(rows, cols);
      std::size_t pos = payload_begin + offset;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c, pos += sizeof(double)) m(r, c) = get<double>(bytes, pos);
      }
      payload_size += nbytes;
      file.tensors.emplace_back(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("malformed tensor entry: ") + e.what());
  }

  const std::size_t expected = payload_begin + payload_size + 4;
  if (bytes.size() < expected) throw TruncationError("file ends before the payload checksum");
  if (bytes.size() > expected) throw FormatError("trailing bytes after the payload checksum");
  const auto stored_crc = get<std::uint32_t>(bytes, payload_begin + payload_size);
  if (stored_crc != crc32_of(bytes.substr(payload_begin, payload_size))) throw ChecksumError("payload CRC32 mismatch");
  return file;
}

void write_tensor_file(const std::filesystem::path& path, std::string_view magic, const TensorFile& file) {
  const std::string bytes = encode_tensor_file(magic, file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_tensor_file(magic, buf.str());
}

}  // namespace panoscan
