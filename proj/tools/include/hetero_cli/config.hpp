#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace hetero::cli {

using Json = nlohmann::ordered_json;

// Every key the tool understands, with its default value.
Json default_config();

// Parses a config document; syntax errors report the line number.
Json parse_config(std::string_view text, const std::string& origin = "config");

// Overlays `user` onto `base`. Unknown keys and type mismatches throw
// ConfigError naming the dotted key path.
void merge_config(Json& base, const Json& user, const std::string& path = "");

// Applies `section.key=value`; the value is read as JSON when it parses,
// otherwise as a string.
void apply_override(Json& config, std::string_view assignment);

}  // namespace hetero::cli
