// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_ERRORS_HPP_
#define TFI_ERRORS_HPP_

#include <optional>
#include <stdexcept>
#include <string>

namespace tfi {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input rejected because its shape or size does not match what the callee
// expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A computation produced or consumed a degenerate quantity: an all-zero
// trigger, a zero denominator, a zero-variance sample.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Non-finite values surfaced during a computation. Carries the federated
// round and client when known.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<int> round = std::nullopt,
                          std::optional<int> client = std::nullopt)
      : Error(Decorate(what, round, client)), round_(round), client_(client) {}

  std::optional<int> round() const { return round_; }
  std::optional<int> client() const { return client_; }

 private:
  static std::string Decorate(const std::string& what, std::optional<int> round,
                              std::optional<int> client) {
    std::string out = what;
    if (round) out += " [round " + std::to_string(*round) + "]";
    if (client) out += " [client " + std::to_string(*client) + "]";
    return out;
  }

  std::optional<int> round_;
  std::optional<int> client_;
};

}  // namespace tfi

#endif  // TFI_ERRORS_HPP_
