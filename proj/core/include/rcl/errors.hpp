#pragma once

#include <stdexcept>

namespace rcl {

// Malformed input file (dataset, checkpoint, embedding dump).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad experiment configuration: unknown key, invalid value, unusable
// loss combination, or a run directory that already exists.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rcl
