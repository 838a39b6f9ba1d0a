#include "rcl/config_file.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <istream>

#include "rcl/errors.hpp"

namespace rcl {

namespace {

std::string trim(const std::string& s) {
  size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

}  // namespace

const IniFile::Section* IniFile::find(const std::string& name) const {
  for (const Section& section : sections)
    if (section.name == name) return &section;
  return nullptr;
}

IniFile parse_ini(std::istream& in, const std::string& name) {
  IniFile file;
  IniFile::Section* current = nullptr;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;

    const std::string where = name + ":" + std::to_string(line_no);
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string section_name = trim(text.substr(1, text.size() - 2));
      if (section_name.empty()) throw ConfigError(where + ": empty section name");
      if (file.find(section_name) != nullptr)
        throw ConfigError(where + ": duplicate section [" + section_name + "]");
      file.sections.push_back(IniFile::Section{section_name, {}});
      current = &file.sections.back();
      continue;
    }

    const size_t eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    if (current == nullptr) throw ConfigError(where + ": key outside any [section]");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (const auto& [existing, _] : current->entries)
      if (existing == key)
        throw ConfigError(where + ": duplicate key '" + key + "' in [" + current->name + "]");
    current->entries.emplace_back(key, value);
  }
  return file;
}

long to_long(const std::string& key, const std::string& value) {
  long out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + value + "'");
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  if (value.empty()) throw ConfigError("key '" + key + "': empty value");
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string current;
  for (const char c : value) {
    if (c == ',') {
      const std::string item = trim(current);
      if (!item.empty()) items.push_back(item);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  const std::string item = trim(current);
  if (!item.empty()) items.push_back(item);
  return items;
}

}  // namespace rcl
