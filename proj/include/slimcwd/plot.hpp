// Copyright 2026 The slimcwd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SLIMCWD_PLOT_HPP
#define SLIMCWD_PLOT_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace slimcwd::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static SVG line chart with markers, axes and a legend.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace slimcwd::plot

#endif  // SLIMCWD_PLOT_HPP
