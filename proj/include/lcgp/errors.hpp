#pragma once

#include <stdexcept>
#include <string>

namespace lcgp {

//! Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

//! Distribution or model parameters violate their constraints.
class InvalidParams : public Error
{
public:
  explicit InvalidParams(const std::string& msg) : Error(msg) {}
};

//! Argument outside the mathematical domain of an operation.
class DomainError : public Error
{
public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

//! Prior configuration whose supports cannot be satisfied.
class InfeasibleError : public Error
{
public:
  explicit InfeasibleError(const std::string& msg) : Error(msg) {}
};

//! Factorization failure or other numerically degenerate computation.
class NumericalError : public Error
{
public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

//! Malformed input file. Carries the offending line (1-based, 0 if unknown).
class ParseError : public Error
{
public:
  ParseError(const std::string& msg, std::size_t line = 0)
    : Error(line ? "line " + std::to_string(line) + ": " + msg : msg)
    , line_(line)
  {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

//! File system failure while reading or writing.
class IoError : public Error
{
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace lcgp
