#pragma once

#include <optional>
#include <string>
#include <vector>

namespace kan {

// One row of targets.csv: a published value with its comparison tolerances.
// A value passes when |value - target| <= max(rel_tol * |target|, abs_tol);
// checks suffixed _min instead require value >= target.
struct TargetRow {
  std::string check;
  std::string op;
  int size = 0;
  double target = 0.0;
  double rel_tol = 0.0;
  double abs_tol = 0.0;
};

struct TargetTable {
  std::string version;
  std::vector<TargetRow> rows;

  const TargetRow* find(const std::string& check, const std::string& op, int size) const;
  std::vector<const TargetRow*> find_all(const std::string& check) const;
};

TargetTable load_targets(const std::string& path);

bool target_passes(double value, const TargetRow& row);

}  // namespace kan
