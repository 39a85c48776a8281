/*
   Copyright 2026 calcap authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "calcap/trainer.hpp"

namespace calcap {

// Every TrainerConfig field under its member name; round-trips exactly.
nlohmann::json config_to_json(const TrainerConfig& config);

// Strict: unknown keys and mistyped values are DataErrors.
TrainerConfig config_from_json(const nlohmann::json& j);

// One "key=value" style override, e.g. ("gamma", "5"). Unknown keys and
// unparsable values are UsageErrors naming the key.
void apply_config_override(TrainerConfig& config, const std::string& key,
                           const std::string& value);

std::vector<std::string> config_keys();

}  // namespace calcap
