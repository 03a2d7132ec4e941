#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sltk {

// Malformed or missing user input. The CLI maps this to exit code 1.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
  public:
    ParseError(const std::string &what, std::size_t line)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class AlignmentError : public InputError {
  public:
    using InputError::InputError;
};

class ConfigError : public InputError {
  public:
    using InputError::InputError;
};

// Broken internal invariant (non-finite gradient, shape mismatch, ...).
// The CLI maps this to exit code 2.
class InvariantError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace sltk
