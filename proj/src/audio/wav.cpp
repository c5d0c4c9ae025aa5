// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "n2n/audio.h"
#include "n2n/error.h"

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

namespace n2n::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw ConfigError("waveform sample rate must be positive");
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw ConfigError("waveform contains a non-finite sample");
  }
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file" + where);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = load_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw FormatError("truncated fmt chunk" + where);
      format = load_le<std::uint16_t>(chunk + 8);
      channels = load_le<std::uint16_t>(chunk + 10);
      rate = load_le<std::uint32_t>(chunk + 12);
      bits = load_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError("truncated WAVE_FORMAT_EXTENSIBLE" + where);
        format = load_le<std::uint16_t>(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Some writers leave 0 or 0xFFFFFFFF in streamed files; clamp to what exists.
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, avail);
      if (have_fmt) break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk" + where);
  if (data == nullptr) throw FormatError("missing data chunk" + where);
  if (channels != 1) {
    throw UnsupportedError(std::to_string(channels) + "-channel audio is not supported" + where);
  }
  if (rate == 0) throw FormatError("zero sample rate" + where);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w.samples[i] = load_le<std::int16_t>(data + 2 * i) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float f = load_le<float>(data + 4 * i);
      if (!std::isfinite(f)) throw FormatError("non-finite float sample" + where);
      w.samples[i] = f;
    }
  } else {
    throw UnsupportedError("unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)" + where);
  }
  return w;
}

std::size_t write_wav(const Waveform& w, const std::filesystem::path& path,
                      WavEncoding encoding) {
  if (w.samples.empty()) throw ConfigError("cannot write an empty waveform");
  validate(w);

  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bytes_per_sample = pcm ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(w.samples.size() * bytes_per_sample);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_le<std::uint32_t>(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * bytes_per_sample);
  put_le<std::uint16_t>(out, bytes_per_sample);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  put_tag(out, "data");
  put_le<std::uint32_t>(out, data_size);

  std::size_t clipped = 0;
  if (pcm) {
    constexpr double kMax = 1.0 - 1.0 / 32768.0;
    for (double s : w.samples) {
      double c = s;
      if (c > kMax || c < -1.0) {
        ++clipped;
        c = std::clamp(c, -1.0, kMax);
      }
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    }
  } else {
    for (double s : w.samples) put_le<float>(out, static_cast<float>(s));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
  return clipped;
}

}  // namespace n2n::audio
