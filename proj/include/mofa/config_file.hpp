#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mofa/core/types.hpp"

namespace mofa {

/// Attack config text: one `key = value` per line, keys named exactly like the
/// AttackConfig fields, `#` starts a comment, blank lines are skipped.
using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError (with the line number) on a malformed line, an unknown
/// key or a repeated key.
KeyValues parse_config_text(std::string_view text);
KeyValues read_config_file(const std::filesystem::path& path);

/// Parses `value` into the field named `key`. Throws ConfigError.
void apply_config_value(AttackConfig& config, const std::string& key, const std::string& value);

/// Mode from `mode` if given, else from the file's `mode` key; then the mode
/// defaults, the file values and finally `overrides`. Validates the result.
AttackConfig resolve_config(const KeyValues& file, const KeyValues& overrides,
                            std::optional<AttackMode> mode = std::nullopt);

/// Every field in the text format, in declaration order. Round-trips through
/// parse_config_text() and resolve_config() exactly.
std::string format_config(const AttackConfig& config);

}  // namespace mofa
