#include "kan/targets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kan {

const TargetRow* TargetTable::find(const std::string& check, const std::string& op,
                                   int size) const {
  for (const TargetRow& r : rows)
    if (r.check == check && r.op == op && r.size == size) return &r;
  return nullptr;
}

std::vector<const TargetRow*> TargetTable::find_all(const std::string& check) const {
  std::vector<const TargetRow*> out;
  for (const TargetRow& r : rows)
    if (r.check == check) out.push_back(&r);
  return out;
}

TargetTable load_targets(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open targets file: " + path);
  TargetTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.rfind("# version:", 0) == 0) {
      table.version = line.substr(10);
      while (!table.version.empty() && table.version.front() == ' ')
        table.version.erase(table.version.begin());
      continue;
    }
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.empty() || (cells.size() == 1 && cells[0].find_first_not_of(" \t\r") == std::string::npos))
      continue;
    if (cells.size() != 6)
      throw std::invalid_argument("targets line " + std::to_string(line_no) +
                                  ": expected 6 comma-separated fields");
    TargetRow r;
    r.check = cells[0];
    r.op = cells[1];
    try {
      r.size = std::stoi(cells[2]);
      r.target = std::stod(cells[3]);
      r.rel_tol = std::stod(cells[4]);
      r.abs_tol = std::stod(cells[5]);
    } catch (const std::exception&) {
      throw std::invalid_argument("targets line " + std::to_string(line_no) + ": bad numeric field");
    }
    table.rows.push_back(r);
  }
  return table;
}

bool target_passes(double value, const TargetRow& row) {
  if (row.check.size() > 4 && row.check.substr(row.check.size() - 4) == "_min")
    return value >= row.target;
  return std::abs(value - row.target) <= std::max(row.rel_tol * std::abs(row.target), row.abs_tol);
}

}  // namespace kan
