#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmgc::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line for each row, for error reporting.
  std::vector<int> line_no;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<int>(k);
    throw std::runtime_error("csv: missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

inline Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw std::runtime_error(path.filename().string() + ":" +
                               std::to_string(lineno) + ": expected " +
                               std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_no.push_back(lineno);
  }
  if (t.header.empty())
    throw std::runtime_error("csv: empty file " + path.string());
  return t;
}

inline long parse_int(const std::string& s, const std::string& context) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error(context + ": bad integer '" + s + "'");
  return v;
}

inline double parse_real(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": bad number '" + s + "'");
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("csv: cannot write " + path.string());
    out_.precision(17);
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << fields, first = false), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace mmgc::csv
