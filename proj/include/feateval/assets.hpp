#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace feateval {

/// Versioned text assets compiled into the library: prompt templates under
/// "prompts/v1/" and protocol schemas under "schemas/v1/".
std::string_view asset(std::string_view name);
std::vector<std::string> asset_names();

}  // namespace feateval
