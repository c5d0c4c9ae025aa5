// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <stdexcept>
#include <string>

namespace n2n {

// Base of every error raised by the library. Subclasses tag the failure
// class so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (bad RIFF header, bad manifest line, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed but outside what we support (stereo WAV, 24-bit PCM, ...).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition or passed a bad configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Stored artifact failed an integrity check (truncated blob, bad magic).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define N2N_REQUIRE(cond, msg)                                   \
  do {                                                           \
    if (!(cond)) throw ::n2n::ConfigError(std::string(msg));     \
  } while (0)

}  // namespace n2n
