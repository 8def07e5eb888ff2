// Copyright 2026 The ccmppi Authors
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

#ifndef CCMPPI_ERRORS_HPP_
#define CCMPPI_ERRORS_HPP_

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ccmppi {

// A computation produced a non-finite or otherwise out-of-domain value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Inputs violate a documented precondition (dimensions, definiteness, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The hard terminal-covariance constraint could not be met.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, Eigen::MatrixXd achieved)
      : std::runtime_error(what), achieved_(std::move(achieved)) {}

  // Terminal covariance reached by the most aggressive gain tried.
  const Eigen::MatrixXd& achieved_covariance() const { return achieved_; }

 private:
  Eigen::MatrixXd achieved_;
};

// Malformed or incomplete scenario configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccmppi

#endif  // CCMPPI_ERRORS_HPP_
