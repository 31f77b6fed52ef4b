#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "engage/common.hpp"

namespace engage::csv {

// Streaming RFC-4180 reader: quoted fields may contain commas, newlines, and
// doubled quotes. Records are terminated by LF or CRLF outside quotes.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  // Reads one record into `fields`. Returns false at end of input.
  bool read_record(std::vector<std::string>& fields) {
    fields.clear();
    int c = is_.get();
    if (c == std::char_traits<char>::eof()) return false;
    ++record_;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (;; c = is_.get()) {
      if (c == std::char_traits<char>::eof()) {
        if (in_quotes) throw DataError("unterminated quoted CSV field at record " + std::to_string(record_));
        break;
      }
      any = true;
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          int peek = is_.peek();
          if (peek == '"') {
            is_.get();
            field += '"';
          } else {
            in_quotes = false;
          }
        } else {
          field += ch;
        }
        continue;
      }
      if (ch == '"' && field.empty()) {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        break;
      } else if (ch == '\r') {
        if (is_.peek() == '\n') is_.get();
        break;
      } else {
        field += ch;
      }
    }
    (void)any;
    fields.push_back(std::move(field));
    return true;
  }

  std::uint64_t record_number() const { return record_; }

 private:
  std::istream& is_;
  std::uint64_t record_ = 0;
};

inline void write_field(std::ostream& os, std::string_view field) {
  bool needs_quotes = false;
  for (char c : field)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  if (!needs_quotes) {
    os << field;
    return;
  }
  os << '"';
  for (char c : field) {
    if (c == '"') os << "\"\"";
    else os << c;
  }
  os << '"';
}

inline void write_record(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    write_field(os, fields[i]);
  }
  os << '\n';
}

}  // namespace engage::csv
