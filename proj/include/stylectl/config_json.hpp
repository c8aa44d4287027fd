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

// JSON form of ControlConfig, shared by session manifests, the HTTP API and
// the CLI's --json output.

#include <string>

#include <json.hpp>

#include "stylectl/attention_control.hpp"
#include "stylectl/errors.hpp"

namespace stylectl {

inline std::string window_name(GuidanceWindow w) {
  return w == GuidanceWindow::Early ? "early" : "inverted";
}

inline GuidanceWindow parse_window(const std::string& s) {
  if (s == "early") return GuidanceWindow::Early;
  if (s == "inverted") return GuidanceWindow::Inverted;
  throw ConfigurationError("unknown guidance window '" + s + "'");
}

inline nlohmann::json config_to_json(const ControlConfig& c) {
  return {{"omega", c.omega},
          {"sac_start", c.sac_start},
          {"steps", c.steps},
          {"layer_gate", c.layer_gate.to_string()},
          {"renormalize_masked_rows", c.renormalize_masked_rows},
          {"window", window_name(c.window)},
          {"prompt", c.prompt},
          {"guidance_scale", c.guidance_scale},
          {"schedule", c.schedule}};
}

namespace detail {
inline int strict_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ArgumentError("config key '" + key + "' must be an integer");
  return v.get<int>();
}
}  // namespace detail

// Missing keys keep their defaults; present keys must have the right type.
// Unknown keys are rejected so typos do not pass silently.
inline ControlConfig config_from_json(const nlohmann::json& j, ControlConfig base = {}) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "omega") base.omega = value.get<double>();
      else if (key == "sac_start") base.sac_start = detail::strict_int(value, key);
      else if (key == "steps") base.steps = detail::strict_int(value, key);
      else if (key == "layer_gate") base.layer_gate = LayerGate::parse(value.get<std::string>());
      else if (key == "renormalize_masked_rows") base.renormalize_masked_rows = value.get<bool>();
      else if (key == "window") base.window = parse_window(value.get<std::string>());
      else if (key == "prompt") base.prompt = value.get<std::string>();
      else if (key == "guidance_scale") base.guidance_scale = value.get<double>();
      else if (key == "schedule") base.schedule = value.get<std::string>();
      else throw ArgumentError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("bad config value: ") + e.what());
  }
  return base;
}

}  // namespace stylectl
