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

#ifndef TFI_ARCHITECTURES_HPP_
#define TFI_ARCHITECTURES_HPP_

// Toy analogues of the structural families under study: sequential
// convolution, residual (skip-add) and dense (skip-concat) connectivity, and
// a fully-connected baseline.

#include <array>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>

#include "tfi/errors.hpp"
#include "tfi/net.hpp"

namespace tfi {

inline constexpr std::array<std::string_view, 4> kArchitectureNames = {
    "plain_cnn", "residual_cnn", "dense_cnn", "mlp"};

inline std::string ArchitectureText(std::string_view name, const Shape& input,
                                    std::size_t classes, std::size_t width = 6) {
  if (input.size() != 3 || input[1] % 4 != 0 || input[2] % 4 != 0) {
    throw ConfigError("toy architectures expect [C, H, W] input with H, W divisible by 4");
  }
  std::ostringstream os;
  os << "input " << input[0] << ' ' << input[1] << ' ' << input[2] << '\n';
  if (name == "plain_cnn") {
    os << "conv " << width << "\nrelu tap\npool\n"
       << "conv " << width << "\nrelu\n"
       << "conv " << width << "\nrelu tap\npool\nflatten\n";
  } else if (name == "residual_cnn") {
    os << "conv " << width << "\nrelu tap\npool as p1\n"
       << "conv " << width << "\nrelu\n"
       << "conv " << width << "\nadd p1\nrelu tap\npool\nflatten\n";
  } else if (name == "dense_cnn") {
    os << "conv " << width << "\nrelu tap\npool as p1\n"
       << "conv " << width << "\nrelu\nconcat p1 as c1\n"
       << "conv " << width << "\nrelu\nconcat c1 tap\npool\nflatten\n";
  } else if (name == "mlp") {
    os << "flatten\ndense " << 8 * width << "\nrelu tap\n";
  } else {
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
  }
  os << "dense " << classes << " tap\n";
  return os.str();
}

inline std::shared_ptr<const ArchitectureGraph> BuildArchitecture(std::string_view name,
                                                                  const Shape& input,
                                                                  std::size_t classes,
                                                                  std::size_t width = 6) {
  return std::make_shared<const ArchitectureGraph>(
      ArchitectureGraph::Parse(ArchitectureText(name, input, classes, width)));
}

}  // namespace tfi

#endif  // TFI_ARCHITECTURES_HPP_
