// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace n2n::checkpoint {

enum class Dtype { kFloat32, kFloat64 };

struct TensorRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  Dtype dtype = Dtype::kFloat32;
  // Held as double in memory; float32 records only ever hold values that
  // are exactly representable in float, so save/load is bit-exact.
  std::vector<double> values;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
  const TensorRecord& at(const std::string& name) const;
};

// File layout (all integers little-endian):
//   8 bytes   magic "N2NCKPT1"
//   8 bytes   header length H (uint64)
//   H bytes   UTF-8 JSON header:
//               {"meta": {...}, "blob_bytes": N, "blob_fnv1a64": "<hex>",
//                "tensors": [{"name", "shape", "dtype", "byte_offset", "byte_length"}]}
//   N bytes   tensor blob, each tensor packed at its byte_offset
void save(const std::filesystem::path& path, const Container& c);

// Throws IntegrityError on bad magic, size mismatch, truncated blob or
// checksum failure; FormatError on a malformed header.
Container load(const std::filesystem::path& path);

std::string dtype_name(Dtype d);

}  // namespace n2n::checkpoint
