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

#ifndef SLIMCWD_ZOO_HPP
#define SLIMCWD_ZOO_HPP

#include <nlohmann/json.hpp>

namespace slimcwd::zoo {

/// Small detector with a residual stage, an SPP-style max-pool concat and a
/// top-down fuse, emitting per-class logits at stride 4. Roughly 65k
/// parameters at width 1. `width` scales every hidden layer; node ids are
/// the same at any width so a wider teacher can be tapped by name.
nlohmann::json toy_detector_spec(int num_classes = 3, double width = 1.0);

}  // namespace slimcwd::zoo

#endif  // SLIMCWD_ZOO_HPP
