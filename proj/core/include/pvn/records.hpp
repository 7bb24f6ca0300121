#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pvn {

/// Line-delimited structured text record: a kind tag followed by key=value
/// fields. Doubles are written with 17 significant digits so a parse ->
/// format round trip is bit-exact.
class Record {
 public:
  explicit Record(std::string kind = "") : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

  Record& set(const std::string& key, const std::string& value);
  Record& set(const std::string& key, std::int64_t value);
  Record& set(const std::string& key, double value);
  Record& set(const std::string& key, const std::vector<double>& values);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  std::string format() const;
  static Record parse(const std::string& line);

 private:
  std::string kind_;
  std::vector<std::pair<std::string, std::string>> fields_;
  const std::string* find(const std::string& key) const;
};

std::string format_double_exact(double v);

}  // namespace pvn
