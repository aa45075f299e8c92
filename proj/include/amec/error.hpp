#ifndef AMEC_ERROR_HPP
#define AMEC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace amec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside the mathematical domain of a formula.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range configuration.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// The requested problem has no feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap before meeting its tolerance.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace amec

#endif  // AMEC_ERROR_HPP
