#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kan/arch.hpp"
#include "kan/cost_model.hpp"

namespace kan {

struct OpShape {
  int batch = 1;
  int h = 0;
  int w = 0;
  int c = 0;
};

struct CostReport {
  std::string op;
  OpShape shape;
  long long madd = 0;          // per-sample, model madd-v1
  long long memory_bytes = 0;  // batch-inclusive, model mem-v1
  long long params = 0;
  std::optional<double> wall_ms;  // median over repeats, single-threaded
  double madd_saving_pct = 0.0;   // vs regular attention at the same shape
  double memory_saving_pct = 0.0;
  double speedup = 1.0;
};

// analytic per-sample MAdd under the declared model (operators carry no
// transforms in the comparison table)
long long madd_of(AttentionKind op, int h, int w, int c);
long long memory_of(AttentionKind op, int h, int w, int c, int batch);

// Median wall time over `repeats` runs (after 3 warmups) of the operator on a
// seeded random batch, pinned to one thread; analytic fields attached.
// Benchmarks are serialized process-wide to keep timings clean.
CostReport benchmark(AttentionKind op, OpShape shape, int repeats, std::uint64_t seed);

// the four operators across the given square shapes, with savings and speedups
// computed against regular attention per shape
std::vector<CostReport> benchmark_table(const std::vector<std::pair<int, int>>& shapes,
                                        int channels, int batch, int repeats, std::uint64_t seed,
                                        bool measure_time = true);

struct AuditRow {
  std::string name;
  std::string kind;
  long long params = 0;
  long long madd = 0;
};

struct AuditReport {
  std::vector<AuditRow> layers;
  long long total_params = 0;
  long long total_madd = 0;
  long long coeff_norm_params = 0;  // batch norm on coefficient matrices, reported separately
  int modules = 0;
};

// analytic parameter/MAdd audit of a network built from the arch file with the
// selected attention kind; totals are exact sums of the per-layer rows
AuditReport audit_network(const ArchSpec& arch, AttentionKind kind);

// fitted log-log slope of madd_of over square sizes (complexity exponent)
double madd_loglog_slope(AttentionKind op, const std::vector<int>& sizes, int channels);

std::string cost_table_csv(const std::vector<CostReport>& rows);
std::string cost_table_markdown(const std::vector<CostReport>& rows);
std::string audit_csv(const AuditReport& report);
std::string audit_markdown(const AuditReport& report, bool per_layer = false);

}  // namespace kan
