/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proxforge {

/// Base class for every error raised by the engine.
///
/// `kind()` is a stable short name ("ShapeMismatch", "ParseError", ...) that
/// the command-line tool prints and tests match against.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PROXFORGE_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, what) {}       \
  }

PROXFORGE_DEFINE_ERROR(ShapeMismatch);
PROXFORGE_DEFINE_ERROR(LengthMismatch);
PROXFORGE_DEFINE_ERROR(DegenerateInput);
PROXFORGE_DEFINE_ERROR(MissingStatistic);
PROXFORGE_DEFINE_ERROR(InvalidScale);
PROXFORGE_DEFINE_ERROR(SchemaError);
PROXFORGE_DEFINE_ERROR(IndexOutOfRange);
PROXFORGE_DEFINE_ERROR(MetricUnavailable);
PROXFORGE_DEFINE_ERROR(ConfigError);
PROXFORGE_DEFINE_ERROR(ExhaustedSampling);
PROXFORGE_DEFINE_ERROR(AllInvalid);
PROXFORGE_DEFINE_ERROR(IoError);

#undef PROXFORGE_DEFINE_ERROR

/// Malformed text input. `position()` is a byte offset for syntax errors and
/// a 1-based line number for line-oriented formats (see `is_line()`).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position, bool is_line = false)
      : Error("ParseError", what + (is_line ? " (line " : " (at byte ") +
                                std::to_string(position) + ")"),
        position_(position),
        is_line_(is_line) {}

  std::size_t position() const noexcept { return position_; }
  bool is_line() const noexcept { return is_line_; }

 private:
  std::size_t position_;
  bool is_line_;
};

}  // namespace proxforge
