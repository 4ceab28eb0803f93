#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "roomloc/harness.hpp"

namespace roomloc {

// JSON scenario files. Every key is optional and falls back to the Scenario
// default; unknown keys are rejected with ConfigError naming the key path.
Scenario scenario_from_json(std::string_view text);
std::string scenario_to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

// Returns `json_text` with the value at a dotted key path ("sync.jitter_std",
// "layout.count") replaced. `value` is parsed as JSON, falling back to a
// plain string. Intermediate objects are created as needed.
std::string apply_override(std::string_view json_text, std::string_view dotted_key, std::string_view value);

}  // namespace roomloc
