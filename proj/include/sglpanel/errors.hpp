#pragma once

#include <stdexcept>
#include <string>

namespace sglpanel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A design column with zero empirical norm.
class DegenerateColumn : public Error {
 public:
  DegenerateColumn(std::size_t column, const std::string& name)
      : Error("degenerate column " + std::to_string(column) +
              (name.empty() ? std::string{} : " (" + name + ")") +
              ": zero empirical norm"),
        column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Malformed or incomplete input data; carries a 1-based line number when known.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NearSingularDesign : public Error {
 public:
  using Error::Error;
};

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

}  // namespace sglpanel
