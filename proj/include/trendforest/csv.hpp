#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trendforest::csv {

using Row = std::vector<std::string>;

// Reads one RFC-4180 record. Returns false at end of input. Quoted fields may
// contain separators, doubled quotes and line breaks.
inline bool read_record(std::istream& in, Row& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;

  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  char c = 0;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      break;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  fields.push_back(std::move(field));
  return true;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_record(std::ostream& out, const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace trendforest::csv
