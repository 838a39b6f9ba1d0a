#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace rcl {

// Flat "key = value" text with [section] headers. Comments start with '#' or
// ';'. Duplicate sections or keys are rejected; value parsing is strict
// (the whole token must be consumed).
struct IniFile {
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
};

IniFile parse_ini(std::istream& in, const std::string& name = "<stream>");

// Strict value converters; throw ConfigError with the key name on failure.
long to_long(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::vector<std::string> split_list(const std::string& value);

}  // namespace rcl
