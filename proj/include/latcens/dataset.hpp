#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latcens/common.hpp"

namespace latcens {
namespace data {

enum class Status : unsigned char { Obs, Left, Right };

// Column-named rectangular data. Values are doubles with NaN marking missing
// cells; censorable variables carry a parallel status vector whose entries
// say whether the stored value is the observation itself or a censoring bound.
struct Dataset {
  std::vector<std::string> columns;                    // value columns, file order
  Eigen::MatrixXd values;                              // n x columns.size()
  std::map<std::string, std::vector<Status>> status;   // per censored variable

  int n() const { return static_cast<int>(values.rows()); }
  int ncol() const { return static_cast<int>(values.cols()); }
  int col_index(const std::string& name) const;        // -1 if absent
  int require_col(const std::string& name) const;      // throws DataError
  bool has_status(const std::string& name) const { return status.count(name) > 0; }
  Status status_of(const std::string& name, int row) const;
  void add_column(const std::string& name);            // appends NaN-filled
};

// CSV dialect: comma separators, mandatory header, empty cell = missing,
// censored variable X stored as value column `X` plus `X_status` in
// {obs,left,right}. `X_status` columns are recognized by suffix and folded
// into Dataset::status on read.
Dataset read_csv(std::istream& in);
Dataset read_csv_file(const std::string& path);
void write_csv(const Dataset& d, std::ostream& out);
void write_csv_file(const Dataset& d, const std::string& path);

}  // namespace data
}  // namespace latcens
