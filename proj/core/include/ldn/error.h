#pragma once

#include <stdexcept>
#include <string>

namespace ldn {

// Base of every error raised by the library. The CLI maps these to exit
// code 1; UsageError maps to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Value outside its domain (symbol not in the character set, bad spec).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Shapes of two operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MissingGlyphError : public Error {
 public:
  MissingGlyphError(const std::string& font_id, char ch)
      : Error("font '" + font_id + "' has no glyph for '" +
              std::string(1, ch) + "'"),
        font_id_(font_id),
        ch_(ch) {}

  const std::string& font_id() const { return font_id_; }
  char ch() const { return ch_; }

 private:
  std::string font_id_;
  char ch_;
};

// Content does not fit the available extent.
class LayoutError : public Error {
 public:
  LayoutError(const std::string& what, double required, double available)
      : Error(what + " (required " + std::to_string(required) +
              ", available " + std::to_string(available) + ")"),
        required_(required),
        available_(available) {}

  double required() const { return required_; }
  double available() const { return available_; }

 private:
  double required_;
  double available_;
};

// Non-finite activation or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Corrupt or tampered checkpoint blob.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint schema version or config hash mismatch.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Bad command line or configuration; exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure inside one pipeline stage so callers can report it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ldn
