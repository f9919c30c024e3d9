#pragma once

#include <stdexcept>
#include <string>

namespace skinseg {

/// Problem with data handed to the library: missing or undecodable files,
/// corrupt model files, mismatched raster dimensions, malformed manifests.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure during a computation whose inputs were valid (e.g. training divergence).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skinseg
