#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace gmodel {

/// Shortest round-trip-ish rendering for messages ("%.6g").
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridMismatch : public Error {
 public:
  GridMismatch(std::size_t lhs, std::size_t rhs)
      : Error("grid mismatch: " + std::to_string(lhs) + " vs " +
              std::to_string(rhs) + " points") {}
};

class NonFiniteField : public Error {
 public:
  explicit NonFiniteField(const std::string& where)
      : Error("non-finite value in " + where) {}
};

/// The interface variable u reached zero or below; u^{-m} is undefined.
class NonPositiveU : public Error {
 public:
  explicit NonPositiveU(double min_u)
      : Error("non-positive u (min u = " + format_number(min_u) + ")"),
        min_u_(min_u) {}
  double min_u() const noexcept { return min_u_; }

 private:
  double min_u_;
};

class PicardDiverged : public Error {
 public:
  PicardDiverged(int iterations, double residual)
      : Error("Picard iteration failed after " + std::to_string(iterations) +
              " iterations (residual " + format_number(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class NewtonDiverged : public Error {
 public:
  NewtonDiverged(int iterations, double residual)
      : Error("Newton iteration failed after " + std::to_string(iterations) +
              " iterations (residual " + format_number(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class SingularJacobian : public Error {
 public:
  explicit SingularJacobian(double condition)
      : Error("bordered Jacobian is singular (condition estimate " +
              format_number(condition) + ")"),
        condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class TruncationOverflow : public Error {
 public:
  using Error::Error;
};

}  // namespace gmodel
