#pragma once

#include <stdexcept>
#include <string>

namespace cfqa {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File does not carry the expected magic or header layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Header and payload disagree (truncated or padded file, checksum mismatch).
class CorruptError : public Error {
 public:
  using Error::Error;
};

/// A value violates a numeric invariant (NaN, Inf, out-of-domain).
class ValueError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid codec, policy or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// The quantity is mathematically undefined for the given input (zero norm, empty mask).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Scores and labels could not be paired on (feature_id, ladder point).
class JoinError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfqa
