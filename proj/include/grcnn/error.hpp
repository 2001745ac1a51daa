// Copyright 2026 The GRCNN Toolkit Authors
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

#include <stdexcept>
#include <string>

namespace grcnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or precondition violation at an API boundary.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Hermitian symmetry broken during phase randomization.
class SymmetryError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace grcnn
