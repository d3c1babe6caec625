#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kan {

struct OpGradCheck {
  std::string op;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central-difference sweep over every differentiable op (kernels, attention
// operators, layers, and the four module kinds end to end) on randomized
// small shapes, `seeds` instances per op.
std::vector<OpGradCheck> gradcheck_all_ops(int seeds, double epsilon, double threshold,
                                           std::uint64_t base_seed = 0);

}  // namespace kan
