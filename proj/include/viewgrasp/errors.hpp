#pragma once

#include <stdexcept>

namespace viewgrasp {

/// Operation called on an object that cannot support it (empty density, unmerged store, ...).
struct InvalidState : std::logic_error {
  using std::logic_error::logic_error;
};

/// Conditioning on a descriptor with (numerically) zero marginal density.
struct DegenerateConditional : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input files or documents that do not parse or violate their schema.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace viewgrasp
