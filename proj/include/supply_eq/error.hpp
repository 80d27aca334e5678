#pragma once

#include <stdexcept>
#include <string>

namespace supply_eq {

/// Malformed or out-of-contract input data (files, embeddings, ratings).
/// The CLI maps this to exit code 3; argument errors stay std::invalid_argument.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace supply_eq
