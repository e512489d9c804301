#include "mofa/config_file.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mofa/core/errors.hpp"

namespace mofa {

namespace {

constexpr std::array<std::string_view, 14> kKeys = {
    "mode",    "alpha", "exponent_s", "margin_k",  "detect_threshold_tau", "p_norm",         "iterations",
    "step_size", "seed", "repeats",   "mask_size", "matcher_weight",       "target",         "registered"};

bool known_key(std::string_view key) {
  for (auto k : kKeys) {
    if (k == key) return true;
  }
  return false;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + value + "' for " + key);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_config_text(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!known_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!out.emplace(key, value).second) throw ConfigError(where + ": repeated key '" + key + "'");
  }
  return out;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

void apply_config_value(AttackConfig& c, const std::string& key, const std::string& value) {
  if (key == "mode") c.mode = parse_attack_mode(value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "exponent_s") c.exponent_s = parse_number<double>(key, value);
  else if (key == "margin_k") c.margin_k = parse_number<double>(key, value);
  else if (key == "detect_threshold_tau") c.detect_threshold_tau = parse_number<double>(key, value);
  else if (key == "p_norm") c.p_norm = parse_number<double>(key, value);
  else if (key == "iterations") c.iterations = parse_number<int>(key, value);
  else if (key == "step_size") c.step_size = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "repeats") c.repeats = parse_number<int>(key, value);
  else if (key == "mask_size") c.mask_size = parse_mask_style(value);
  else if (key == "matcher_weight") c.matcher_weight = parse_number<double>(key, value);
  else if (key == "target") c.target = value;
  else if (key == "registered") c.registered = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

AttackConfig resolve_config(const KeyValues& file, const KeyValues& overrides, std::optional<AttackMode> mode) {
  if (!mode) {
    if (auto it = overrides.find("mode"); it != overrides.end()) mode = parse_attack_mode(it->second);
    else if (auto jt = file.find("mode"); jt != file.end()) mode = parse_attack_mode(jt->second);
    else throw ConfigError("attack mode not set (use --mode or a mode line in the config file)");
  }
  AttackConfig c = AttackConfig::defaults_for(*mode);
  for (const KeyValues* layer : {&file, &overrides}) {
    for (const auto& [key, value] : *layer) {
      if (key != "mode") apply_config_value(c, key, value);
    }
  }
  c.validate();
  return c;
}

std::string format_config(const AttackConfig& c) {
  std::ostringstream out;
  out << "mode = " << to_string(c.mode) << "\n"
      << "alpha = " << format_double(c.alpha) << "\n"
      << "exponent_s = " << format_double(c.exponent_s) << "\n"
      << "margin_k = " << format_double(c.margin_k) << "\n"
      << "detect_threshold_tau = " << format_double(c.detect_threshold_tau) << "\n"
      << "p_norm = " << format_double(c.p_norm) << "\n"
      << "iterations = " << c.iterations << "\n"
      << "step_size = " << format_double(c.step_size) << "\n"
      << "seed = " << c.seed << "\n"
      << "repeats = " << c.repeats << "\n"
      << "mask_size = " << to_string(c.mask_size) << "\n"
      << "matcher_weight = " << format_double(c.matcher_weight) << "\n";
  if (!c.target.empty()) out << "target = " << c.target << "\n";
  if (!c.registered.empty()) out << "registered = " << c.registered << "\n";
  return out.str();
}

}  // namespace mofa
