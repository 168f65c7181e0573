#include "entmlm/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("key " + key + ": cannot parse '" + text + "'");
  return value;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    if (cfg.values_.contains(key)) {
      throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key " + key);
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool RunConfig::has(const std::string& key) const { return values_.contains(key); }

const std::string* RunConfig::lookup(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  const std::string* v = lookup(key);
  return v ? parse_number<long long>(key, *v) : fallback;
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
  const std::string* v = lookup(key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = lookup(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": cannot parse '" + *v + "' as a number");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("key " + key + ": expected true or false, got '" + *v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::stringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("key " + key + ": empty list");
  return out;
}

void RunConfig::reject_unknown() const {
  for (const auto& [key, value] : values_) {
    if (!used_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace entmlm
