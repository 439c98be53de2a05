#pragma once

#include <stdexcept>
#include <string>

namespace tsfm {

/// Tensor dimensions that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite inputs, parameters or losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failures reading or writing the on-disk formats.
class DataError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kUnsupportedVersion,
    kTruncated,
    kDimensionOverflow,
    kBadValue,
    kInconsistent,
  };

  DataError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace tsfm
