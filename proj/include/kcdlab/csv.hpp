//
// Copyright 2026 The kcdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// RFC-4180-style CSV reading and writing, plus dataset ingestion.

#ifndef KCDLAB_CSV_HPP_
#define KCDLAB_CSV_HPP_

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "kcdlab/data.hpp"
#include "kcdlab/error.hpp"

namespace kcdlab {

// Shortest decimal that parses back to the same double.
inline std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) Fail(ErrorCode::kInvalidInput, "cannot format number");
  return std::string(buf, end);
}

inline bool ParseDouble(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Physical line on which each row starts (1-based, header is line 1).
  std::vector<std::size_t> row_lines;

  std::ptrdiff_t ColumnIndex(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  }
};

// Parses quoted fields with doubled-quote escapes and embedded newlines.
// Every row must have as many fields as the header.
inline CsvTable ParseCsv(std::string_view text, char delimiter = ',') {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool field_started = false;
  bool have_header = false;

  auto finish_record = [&]() {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (!have_header) {
        table.header = std::move(record);
        have_header = true;
      } else {
        if (record.size() != table.header.size()) {
          throw ParseError(record_line, "expected " + std::to_string(table.header.size()) +
                                            " fields, found " + std::to_string(record.size()));
        }
        table.rows.push_back(std::move(record));
        table.row_lines.push_back(record_line);
      }
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      if (field_started && !field.empty()) throw ParseError(line, "stray quote inside field");
      in_quotes = true;
      field_started = true;
    } else if (ch == delimiter) {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (ch == '\r') {
      // CRLF line endings.
    } else if (ch == '\n') {
      finish_record();
      ++line;
      record_line = line;
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError(record_line, "unterminated quoted field");
  if (!record.empty() || !field.empty()) finish_record();
  if (!have_header) throw ParseError(1, "missing header row");
  return table;
}

inline std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void WriteTextFile(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) Fail(ErrorCode::kIo, "write to '" + path.string() + "' failed");
}

inline std::string CsvEscape(std::string_view value, char delimiter = ',') {
  const bool needs_quotes = value.find_first_of(std::string{'"', '\n', '\r', delimiter}) !=
                            std::string_view::npos;
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline std::string JoinCsvRow(const std::vector<std::string>& fields, char delimiter = ',') {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delimiter);
    out += CsvEscape(fields[i], delimiter);
  }
  out.push_back('\n');
  return out;
}

struct CsvSchema {
  std::string label_column = "label";
  char delimiter = ',';
};

// Features are every non-label column, in file order. Labels map to dense
// indices in order of first appearance; the mapping is kept in label_names.
inline LabeledDataset DatasetFromCsvText(std::string_view text, const CsvSchema& schema) {
  const CsvTable table = ParseCsv(text, schema.delimiter);
  const std::ptrdiff_t label_col = table.ColumnIndex(schema.label_column);
  if (label_col < 0) {
    Fail(ErrorCode::kSchema, "label column '" + schema.label_column + "' not in header");
  }
  const std::size_t cols = table.header.size();
  Require(cols >= 2, ErrorCode::kSchema, "CSV needs at least one feature column");

  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(table.rows.size()),
                      static_cast<Eigen::Index>(cols - 1));
  std::map<std::string, std::size_t> label_ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    Eigen::Index c_out = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_col) continue;
      double v = 0.0;
      if (!ParseDouble(row[c], v) || !std::isfinite(v)) {
        throw ParseError(table.row_lines[r], "column '" + table.header[c] +
                                                 "': non-numeric feature '" + row[c] + "'");
      }
      out.features(static_cast<Eigen::Index>(r), c_out++) = v;
    }
    const std::string& name = row[static_cast<std::size_t>(label_col)];
    auto [it, inserted] = label_ids.emplace(name, out.label_names.size());
    if (inserted) out.label_names.push_back(name);
    out.labels.push_back(it->second);
  }
  out.class_count = out.label_names.size();
  return out;
}

inline LabeledDataset LoadCsv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kIo, "dataset file '" + path.string() + "' does not exist");
  }
  return DatasetFromCsvText(ReadTextFile(path), schema);
}

// Header f0..f{d-1},<label>. Labels are written as their names when the
// dataset carries them, otherwise as dense indices.
inline std::string DatasetToCsvText(const LabeledDataset& data, const CsvSchema& schema = {}) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < data.feature_dim(); ++j) header.push_back("f" + std::to_string(j));
  header.push_back(schema.label_column);
  std::string out = JoinCsvRow(header, schema.delimiter);
  std::vector<std::string> fields(header.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.feature_dim(); ++j) {
      fields[j] = FormatDouble(data.features(static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(j)));
    }
    const std::size_t y = data.labels[i];
    fields.back() = y < data.label_names.size() ? data.label_names[y] : std::to_string(y);
    out += JoinCsvRow(fields, schema.delimiter);
  }
  return out;
}

inline void SaveCsv(const LabeledDataset& data, const std::filesystem::path& path,
                    const CsvSchema& schema = {}) {
  WriteTextFile(path, DatasetToCsvText(data, schema));
}

}  // namespace kcdlab

#endif  // KCDLAB_CSV_HPP_
