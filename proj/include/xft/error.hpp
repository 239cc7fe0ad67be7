/* Copyright 2026 The xft Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace xft {

// Exit codes used by the CLI for each error category.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kNumeric = 3,
  kIo = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const = 0;
};

/// Invalid configuration, shape mismatch or precondition violation.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kConfig; }
};

/// Non-finite values, divergence, failed matrix square root.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kNumeric; }
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kIo; }
};

/// Stage failure inside the end-to-end pipeline. Keeps the exit code of the
/// underlying cause and prefixes the message with the stage tag.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what, ExitCode code)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)), code_(code) {}
  ExitCode exit_code() const override { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
  ExitCode code_;
};

}  // namespace xft
