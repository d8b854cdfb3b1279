/* Copyright 2026 The pvo Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef PVO_ERROR_HPP_
#define PVO_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace pvo {

// Error taxonomy. Kind decides the process exit code at the CLI boundary:
// Config/Data/Io/Usage map to 2 (usage/validation), the rest to 1.
enum class ErrorKind {
  kShape,    // dimension mismatch between arrays
  kConfig,   // invalid configuration (kernel extents, topology, presets)
  kData,     // malformed input data (labels out of range, spec mismatch)
  kIndex,    // out-of-bounds grid index
  kNumeric,  // NaN/Inf where finite values are required
  kIo,       // file read/write failure
  kUsage,    // bad command-line invocation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_shape(const std::string& msg) {
  throw Error(ErrorKind::kShape, msg);
}
[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::kConfig, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::kData, msg);
}
[[noreturn]] inline void throw_index(const std::string& msg) {
  throw Error(ErrorKind::kIndex, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::kNumeric, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::kIo, msg);
}

}  // namespace pvo

#endif  // PVO_ERROR_HPP_
