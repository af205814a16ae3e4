#include "latcens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace latcens {
namespace data {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_status_name(const std::string& s) {
  static const std::string suffix = "_status";
  return s.size() > suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string status_base(const std::string& s) { return s.substr(0, s.size() - 7); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    if (b == std::string::npos) { f.clear(); continue; }
    const auto e = f.find_last_not_of(" \t");
    f = f.substr(b, e - b + 1);
  }
  return out;
}

// Shortest decimal representation that round-trips exactly.
std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}
}  // namespace

int Dataset::col_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

int Dataset::require_col(const std::string& name) const {
  const int i = col_index(name);
  if (i < 0) throw DataError("data has no column '" + name + "'");
  return i;
}

Status Dataset::status_of(const std::string& name, int row) const {
  auto it = status.find(name);
  return it == status.end() ? Status::Obs : it->second[row];
}

void Dataset::add_column(const std::string& name) {
  if (col_index(name) >= 0) throw DataError("duplicate column '" + name + "'");
  columns.push_back(name);
  values.conservativeResize(values.rows(), columns.size());
  values.col(values.cols() - 1).setConstant(kNaN);
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: missing CSV header");
  const auto header = split_csv_line(line);

  std::vector<int> value_slot(header.size(), -1);  // header pos -> value column
  Dataset d;
  std::vector<std::pair<size_t, std::string>> status_cols;  // header pos, base name
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw DataError("empty column name in CSV header");
    if (is_status_name(header[i])) {
      status_cols.emplace_back(i, status_base(header[i]));
    } else {
      if (std::find(d.columns.begin(), d.columns.end(), header[i]) != d.columns.end())
        throw DataError("duplicate column '" + header[i] + "'");
      value_slot[i] = static_cast<int>(d.columns.size());
      d.columns.push_back(header[i]);
    }
  }
  for (const auto& [pos, base] : status_cols) {
    (void)pos;
    if (std::find(d.columns.begin(), d.columns.end(), base) == d.columns.end())
      throw DataError("status column '" + base + "_status' has no value column '" +
                      base + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<Status>> srows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    std::vector<double> row(d.columns.size(), kNaN);
    std::vector<Status> srow(status_cols.size(), Status::Obs);
    size_t sc = 0;
    for (size_t i = 0; i < fields.size(); ++i) {
      if (value_slot[i] >= 0) {
        if (!fields[i].empty()) {
          char* end = nullptr;
          const double v = std::strtod(fields[i].c_str(), &end);
          if (end == fields[i].c_str() || *end != '\0')
            throw DataError("line " + std::to_string(lineno) + ": bad number '" +
                            fields[i] + "' in column '" + header[i] + "'");
          row[value_slot[i]] = v;
        }
      } else {
        const std::string& f = fields[i];
        Status s;
        if (f == "obs" || f.empty()) s = Status::Obs;
        else if (f == "left") s = Status::Left;
        else if (f == "right") s = Status::Right;
        else
          throw DataError("line " + std::to_string(lineno) + ": bad status '" + f +
                          "' in column '" + header[i] + "' (want obs/left/right)");
        srow[sc++] = s;
      }
    }
    rows.push_back(std::move(row));
    srows.push_back(std::move(srow));
  }

  d.values.resize(static_cast<int>(rows.size()), static_cast<int>(d.columns.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      d.values(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  for (size_t sc = 0; sc < status_cols.size(); ++sc) {
    std::vector<Status> col(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) col[r] = srows[r][sc];
    d.status[status_cols[sc].second] = std::move(col);
  }
  return d;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(const Dataset& d, std::ostream& out) {
  for (int c = 0; c < d.ncol(); ++c) {
    if (c) out << ',';
    out << d.columns[c];
    if (d.has_status(d.columns[c])) out << ',' << d.columns[c] << "_status";
  }
  out << '\n';
  for (int r = 0; r < d.n(); ++r) {
    for (int c = 0; c < d.ncol(); ++c) {
      if (c) out << ',';
      out << format_double(d.values(r, c));
      if (d.has_status(d.columns[c])) {
        const Status s = d.status.at(d.columns[c])[r];
        out << ',' << (s == Status::Obs ? "obs" : s == Status::Left ? "left" : "right");
      }
    }
    out << '\n';
  }
}

void write_csv_file(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(d, out);
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace data
}  // namespace latcens
