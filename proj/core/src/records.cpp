#include "pvn/records.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace pvn {

std::string format_double_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

bool needs_quoting(const std::string& s) {
  if (s.empty()) return true;
  for (char c : s)
    if (c == ' ' || c == '"' || c == '\\' || c == '\n') return true;
  return false;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Record& Record::set(const std::string& key, const std::string& value) {
  fields_.emplace_back(key, value);
  return *this;
}

Record& Record::set(const std::string& key, std::int64_t value) {
  return set(key, std::to_string(value));
}

Record& Record::set(const std::string& key, double value) { return set(key, format_double_exact(value)); }

Record& Record::set(const std::string& key, const std::vector<double>& values) {
  std::string joined;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) joined.push_back(',');
    joined += format_double_exact(values[i]);
  }
  return set(key, joined);
}

const std::string* Record::find(const std::string& key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return &v;
  return nullptr;
}

bool Record::has(const std::string& key) const { return find(key) != nullptr; }

std::string Record::get_string(const std::string& key) const {
  const auto* v = find(key);
  if (!v) throw std::runtime_error("record '" + kind_ + "': missing field '" + key + "'");
  return *v;
}

std::int64_t Record::get_int(const std::string& key) const { return std::stoll(get_string(key)); }

double Record::get_double(const std::string& key) const { return std::stod(get_string(key)); }

std::vector<double> Record::get_doubles(const std::string& key) const {
  const std::string s = get_string(key);
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    out.push_back(std::stod(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

std::string Record::format() const {
  std::string out = kind_;
  for (const auto& [k, v] : fields_) {
    out.push_back(' ');
    out += k;
    out.push_back('=');
    out += needs_quoting(v) ? quote(v) : v;
  }
  return out;
}

Record Record::parse(const std::string& line) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < line.size() && line[pos] == ' ') ++pos;
  };
  skip_ws();
  std::size_t start = pos;
  while (pos < line.size() && line[pos] != ' ') ++pos;
  Record rec(line.substr(start, pos - start));
  while (true) {
    skip_ws();
    if (pos >= line.size()) break;
    start = pos;
    while (pos < line.size() && line[pos] != '=') ++pos;
    if (pos >= line.size()) throw std::runtime_error("record: field without '=' in: " + line);
    std::string key = line.substr(start, pos - start);
    ++pos;  // '='
    std::string value;
    if (pos < line.size() && line[pos] == '"') {
      ++pos;
      while (pos < line.size() && line[pos] != '"') {
        if (line[pos] == '\\' && pos + 1 < line.size()) {
          ++pos;
          value.push_back(line[pos] == 'n' ? '\n' : line[pos]);
        } else {
          value.push_back(line[pos]);
        }
        ++pos;
      }
      if (pos >= line.size()) throw std::runtime_error("record: unterminated quote in: " + line);
      ++pos;  // closing quote
    } else {
      start = pos;
      while (pos < line.size() && line[pos] != ' ') ++pos;
      value = line.substr(start, pos - start);
    }
    rec.set(key, value);
  }
  return rec;
}

}  // namespace pvn
