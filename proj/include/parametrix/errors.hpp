#pragma once

#include <stdexcept>
#include <string>

namespace parametrix {

// Domain error hierarchy. The CLI maps each type to a process exit code;
// library callers can catch them individually.

// Malformed input documents or unusable arguments (CLI exit 1).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A caller-visible precondition does not hold, e.g. unstabilizable plant,
// singular leading coefficient, unstable plant on an open-loop path (exit 2).
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

// A verification pass (Bezout identity, affine-subspace membership,
// closed-loop stability) exceeded its tolerance (exit 3).
class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& what) : std::runtime_error(what) {}
};

// Requested sparsity structure is not quadratically invariant and the convex
// restriction was not requested (exit 4).
class QiViolationError : public std::runtime_error {
 public:
  explicit QiViolationError(const std::string& what) : std::runtime_error(what) {}
};

// Constraint system of a synthesis program is inconsistent, e.g. FIR horizon
// too short to close the subspace (exit 5).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace parametrix
