// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "n2n/error.h"

namespace n2n::checkpoint {
namespace {

constexpr char kMagic[8] = {'N', '2', 'N', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t dtype_size(Dtype d) { return d == Dtype::kFloat32 ? 4 : 8; }

Dtype parse_dtype(const std::string& s) {
  if (s == "float32") return Dtype::kFloat32;
  if (s == "float64") return Dtype::kFloat64;
  throw FormatError("checkpoint: unknown dtype '" + s + "'");
}

std::int64_t count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

std::string dtype_name(Dtype d) { return d == Dtype::kFloat32 ? "float32" : "float64"; }

const TensorRecord* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorRecord& Container::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw FormatError("checkpoint: missing tensor '" + name + "'");
}

void save(const std::filesystem::path& path, const Container& c) {
  std::vector<std::uint8_t> blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != count(t.shape)) {
      throw ConfigError("checkpoint: tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                        " values for its shape");
    }
    const std::size_t offset = blob.size();
    const std::size_t bytes = t.values.size() * dtype_size(t.dtype);
    blob.resize(offset + bytes);
    std::uint8_t* dst = blob.data() + offset;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      if (t.dtype == Dtype::kFloat32) {
        const auto f = static_cast<float>(t.values[i]);
        std::memcpy(dst + 4 * i, &f, 4);
      } else {
        std::memcpy(dst + 8 * i, &t.values[i], 8);
      }
    }
    entries.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"dtype", dtype_name(t.dtype)},
                       {"byte_offset", offset},
                       {"byte_length", bytes}});
  }
  nlohmann::json header = {{"meta", c.meta},
                           {"tensors", entries},
                           {"blob_bytes", blob.size()},
                           {"blob_fnv1a64", hex64(fnv1a64(blob.data(), blob.size()))}};
  const std::string text = header.dump();
  const std::uint64_t hlen = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Container load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IntegrityError("checkpoint: bad magic in " + path.string());
  }
  std::uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (hlen > bytes.size() - 16) throw IntegrityError("checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: malformed header: " + std::string(e.what()));
  }
  const std::uint8_t* blob = bytes.data() + 16 + hlen;
  const std::size_t blob_size = bytes.size() - 16 - hlen;

  Container c;
  try {
    const auto expected = header.at("blob_bytes").get<std::size_t>();
    if (blob_size != expected) {
      throw IntegrityError("checkpoint: blob is " + std::to_string(blob_size) + " bytes, header declares " +
                           std::to_string(expected) + " (" + path.string() + ")");
    }
    if (header.at("blob_fnv1a64").get<std::string>() != hex64(fnv1a64(blob, blob_size))) {
      throw IntegrityError("checkpoint: blob checksum mismatch in " + path.string());
    }
    c.meta = header.at("meta");
    for (const auto& e : header.at("tensors")) {
      TensorRecord t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      t.dtype = parse_dtype(e.at("dtype").get<std::string>());
      const auto offset = e.at("byte_offset").get<std::size_t>();
      const auto length = e.at("byte_length").get<std::size_t>();
      const auto n = static_cast<std::size_t>(count(t.shape));
      if (length != n * dtype_size(t.dtype) || offset > blob_size || length > blob_size - offset) {
        throw IntegrityError("checkpoint: tensor '" + t.name + "' extent is inconsistent");
      }
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (t.dtype == Dtype::kFloat32) {
          float f;
          std::memcpy(&f, blob + offset + 4 * i, 4);
          t.values[i] = f;
        } else {
          std::memcpy(&t.values[i], blob + offset + 8 * i, 8);
        }
      }
      c.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: malformed header: " + std::string(e.what()));
  }
  return c;
}

}  // namespace n2n::checkpoint
