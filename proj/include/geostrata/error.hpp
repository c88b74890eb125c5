#pragma once

#include <stdexcept>
#include <string>

namespace geostrata {

/// Raised for malformed inputs and violated operation preconditions.
/// The message is a single line so the CLI can print it verbatim.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace geostrata
