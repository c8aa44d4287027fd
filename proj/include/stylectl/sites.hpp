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

#include <string>
#include <string_view>
#include <vector>

#include "stylectl/errors.hpp"

namespace stylectl {

enum class SitePart { Encoder, Middle, Decoder };

inline std::string_view part_name(SitePart p) {
  switch (p) {
    case SitePart::Encoder:
      return "encoder";
    case SitePart::Middle:
      return "middle";
    case SitePart::Decoder:
      return "decoder";
  }
  return "encoder";
}

// One self-attention layer of a denoiser. Indices enumerate sites in forward
// order: encoder shallow to deep, middle, decoder deep to shallow.
struct AttentionSite {
  int index = 0;
  SitePart part = SitePart::Encoder;
  int height = 1;  // spatial grid of the layer; L = height * width
  int width = 1;
  int dim = 1;     // total query/key width across heads
  int heads = 1;

  int spatial_len() const noexcept { return height * width; }
  int head_dim() const noexcept { return dim / heads; }

  friend bool operator==(const AttentionSite&, const AttentionSite&) = default;
};

inline void validate_sites(const std::vector<AttentionSite>& sites) {
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& s = sites[i];
    if (s.index != static_cast<int>(i))
      throw ConfigurationError("attention site indices must be contiguous from 0");
    if (s.spatial_len() < 1 || s.dim < 1 || s.heads < 1 || s.dim % s.heads != 0)
      throw ConfigurationError("attention site " + std::to_string(i) +
                               " has invalid extent");
  }
}

}  // namespace stylectl
