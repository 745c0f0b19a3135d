#pragma once

// "submapdb v1" readers and writers.
//
// Text variant (JSON Lines):
//   {"version":1,"dimension":D,"count":N}
//   {"id":..,"u":..,"v":..,"descriptor":[..]}   x N
//
// Binary variant, little-endian:
//   header (24 bytes): "SMDB" | version u32 | count u64 | dim u32 | reserved u32 (zero)
//   record:            id u64 | u f64 | v f64 | dim x f32
//
// Descriptors are stored as given (not normalized) so either variant
// round-trips bit-exactly.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"

namespace stpe::submapdb {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr char kMagic[4] = {'S', 'M', 'D', 'B'};
inline constexpr std::size_t kHeaderBytes = 24;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ValidationError("truncated binary submap database");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline void check_uniform(std::span<const SubmapRecord> records) {
  for (const auto& r : records) {
    if (r.descriptor.size() != records.front().descriptor.size()) {
      throw DimensionMismatch("mixed descriptor dimensions in database");
    }
  }
}

}  // namespace detail

inline std::string to_jsonl(std::span<const SubmapRecord> records) {
  detail::check_uniform(records);
  std::string out;
  const std::size_t dim = records.empty() ? 0 : records.front().descriptor.size();
  out += nlohmann::json{{"version", kVersion}, {"dimension", dim}, {"count", records.size()}}.dump();
  out += '\n';
  for (const auto& r : records) {
    nlohmann::json line{{"id", r.id}, {"u", r.center_u}, {"v", r.center_v}, {"descriptor", r.descriptor}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline std::string to_binary(std::span<const SubmapRecord> records) {
  detail::check_uniform(records);
  const std::uint32_t dim = records.empty() ? 0 : static_cast<std::uint32_t>(records.front().descriptor.size());
  std::string out(kMagic, 4);
  detail::put_le<std::uint32_t>(out, kVersion);
  detail::put_le<std::uint64_t>(out, records.size());
  detail::put_le<std::uint32_t>(out, dim);
  detail::put_le<std::uint32_t>(out, 0);
  out.reserve(kHeaderBytes + records.size() * (24 + 4 * std::size_t{dim}));
  for (const auto& r : records) {
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.id));
    detail::put_le<double>(out, r.center_u);
    detail::put_le<double>(out, r.center_v);
    for (float f : r.descriptor) detail::put_le<float>(out, f);
  }
  return out;
}

inline std::vector<SubmapRecord> from_binary(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ValidationError("not a binary submap database");
  }
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw ValidationError("unsupported submapdb version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(bytes, pos);
  const auto dim = detail::get_le<std::uint32_t>(bytes, pos);
  detail::get_le<std::uint32_t>(bytes, pos);
  const std::size_t record_bytes = 24 + 4 * std::size_t{dim};
  if (bytes.size() != kHeaderBytes + count * record_bytes) {
    throw ValidationError("binary submap database size does not match header count/dimension");
  }
  std::vector<SubmapRecord> records(count);
  for (auto& r : records) {
    r.id = static_cast<SubmapId>(detail::get_le<std::uint64_t>(bytes, pos));
    r.center_u = detail::get_le<double>(bytes, pos);
    r.center_v = detail::get_le<double>(bytes, pos);
    r.descriptor.resize(dim);
    for (auto& f : r.descriptor) f = detail::get_le<float>(bytes, pos);
  }
  return records;
}

inline std::vector<SubmapRecord> from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& s) {
    try {
      return nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("submapdb line " + std::to_string(line_no) + ": " + e.what());
    }
  };
  while (line.empty() && std::getline(in, line)) ++line_no;
  if (line.empty()) throw ValidationError("submapdb: missing header line");
  std::size_t dim = 0, count = 0;
  try {
    const auto header = parse(line);
    if (header.at("version").get<std::uint32_t>() != kVersion) throw ValidationError("submapdb: unsupported version");
    dim = header.at("dimension").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("submapdb header: ") + e.what());
  }
  std::vector<SubmapRecord> records;
  records.reserve(count);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = parse(line);
    SubmapRecord r;
    try {
      r.id = j.at("id").get<SubmapId>();
      r.center_u = j.at("u").get<double>();
      r.center_v = j.at("v").get<double>();
      r.descriptor = j.at("descriptor").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("submapdb line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.descriptor.size() != dim) {
      throw DimensionMismatch("submapdb line " + std::to_string(line_no) + ": descriptor has " +
                              std::to_string(r.descriptor.size()) + " values, header says " + std::to_string(dim));
    }
    records.push_back(std::move(r));
  }
  if (records.size() != count) {
    throw ValidationError("submapdb: header count " + std::to_string(count) + " but " + std::to_string(records.size()) +
                          " records");
  }
  return records;
}

// Accepts either variant, chosen by the leading magic bytes.
inline std::vector<SubmapRecord> parse(const std::string& bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return from_binary(bytes);
  return from_jsonl(bytes);
}

inline std::vector<SubmapRecord> load(const std::string& path) { return parse(detail::read_file(path)); }

enum class Encoding { jsonl, binary };

inline void save(const std::string& path, std::span<const SubmapRecord> records, Encoding enc = Encoding::jsonl) {
  detail::write_file(path, enc == Encoding::binary ? to_binary(records) : to_jsonl(records));
}

}  // namespace stpe::submapdb
