/* Copyright 2026 The stylectl Authors. All Rights Reserved.

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

namespace stylectl {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed an invalid value or mismatched shapes.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Unknown preset, unsupported size, bad layer gate text
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class NumericalDomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A required adapter (face parser, feature extractor, ...) is not registered.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class BusyError : public Error {
 public:
  using Error::Error;
};

class MigrationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Failure tied to a specific iteration (training step, inversion step,
// denoising step).
class StepError : public Error {
 public:
  StepError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class TrainingError : public StepError {
 public:
  TrainingError(const std::string& what, int step)
      : StepError("training step " + std::to_string(step) + ": " + what, step) {}
};

class InversionError : public StepError {
 public:
  InversionError(const std::string& what, int step)
      : StepError("inversion step " + std::to_string(step) + ": " + what, step) {}
};

class PipelineError : public StepError {
 public:
  PipelineError(const std::string& what, int step)
      : StepError("denoising step " + std::to_string(step) + ": " + what, step) {}
};

}  // namespace stylectl
