// Copyright 2026 The kprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kprompt {

enum class ErrorCode {
  kParse,
  kEmptyCorpus,
  kMissingTemplate,
  kMissingName,
  kInvalidArgument,
  kSequenceTooShort,
  kBudgetExceeded,
  kCoverage,
  kNumeric,
  kConfig,
  kMissingArtifact,
  kIo,
};

// Base for every error raised by the library. Callers that only need a
// message can catch std::runtime_error.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& detail)
      : Error(ErrorCode::kParse,
              path + ":" + std::to_string(line) + ": " + detail),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

// Raised when a fused prompt does not fit the input token budget.
class BudgetError : public Error {
 public:
  BudgetError(std::size_t required, std::size_t available)
      : Error(ErrorCode::kBudgetExceeded,
              "fused prompt needs " + std::to_string(required) +
                  " tokens but max_input_tokens is " +
                  std::to_string(available) +
                  "; lower degree first, then hops"),
        required_(required),
        available_(available) {}

  std::size_t required() const noexcept { return required_; }
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t required_;
  std::size_t available_;
};

}  // namespace kprompt
