#pragma once

#include <stdexcept>
#include <string>

namespace abdex {

// Malformed or inconsistent user input: model documents, instance files,
// assignments outside the domain, out-of-range class indices.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised while loading a model document. The message names the offending
// layer and index.
class LoadError : public InputError {
 public:
  using InputError::InputError;
};

// The instance's prediction is tied at the argmax; abductive explanations
// presume a unique predicted class.
class TiedPredictionError : public InputError {
 public:
  using InputError::InputError;
};

// Numerical trouble inside the LP/MILP engine (iteration limit, a returned
// point failing its feasibility certificate, binary cap exceeded).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace abdex
