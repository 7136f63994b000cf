#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace priorvo {

/// One `key = value` entry with its 1-based source line.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat `key = value` text; blank lines and `#` comments ignored. Throws ConfigError on
/// lines without `=`, empty keys and duplicate keys.
std::vector<KeyValue> parse_key_values(const std::string& text);
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

// Typed conversions; throw ConfigError naming the key and line.
double to_double(const KeyValue& kv);
int to_int(const KeyValue& kv);
bool to_bool(const KeyValue& kv);
std::vector<int> to_int_list(const KeyValue& kv);

[[noreturn]] void unknown_key(const KeyValue& kv);

}  // namespace priorvo
