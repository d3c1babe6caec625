#include "kan/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kan/attention.hpp"
#include "kan/network.hpp"
#include "kan/rng.hpp"

namespace kan {

namespace {

std::mutex g_benchmark_mutex;  // one timing run at a time per process

Tensor3 random_input(int h, int w, int c, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor3 t(h, w, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(i, -1.0, 1.0);
  return t;
}

Tensor3 run_op(AttentionKind op, const Tensor3& x) {
  switch (op) {
    case AttentionKind::regular: return nonlocal_2d(x);
    case AttentionKind::pooled: return attn_pooled_2d(x);
    case AttentionKind::kao_kv: return kao_kv(x);
    case AttentionKind::kao_qkv: return kao_qkv(x);
  }
  throw std::logic_error("unreachable");
}

const char* display_name(const std::string& op) {
  if (op == "regular") return "Attn";
  if (op == "pooled") return "Attn+Pool";
  if (op == "kao_kv") return "KAO_KV";
  if (op == "kao_qkv") return "KAO_QKV";
  return op.c_str();
}

std::string format_millions(long long v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << double(v) / 1e6 << "m";
  return os.str();
}

std::string format_mb(long long bytes) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << double(bytes) / (1024.0 * 1024.0) << "MB";
  return os.str();
}

}  // namespace

long long madd_of(AttentionKind op, int h, int w, int c) {
  return attention_op_madd(op, h, w, c, /*with_wv=*/false);
}

long long memory_of(AttentionKind op, int h, int w, int c, int batch) {
  return attention_op_memory_bytes(op, h, w, c, batch);
}

CostReport benchmark(AttentionKind op, OpShape shape, int repeats, std::uint64_t seed) {
  if (repeats < 10) throw std::invalid_argument("benchmark: repeats must be >= 10");
  std::lock_guard<std::mutex> lock(g_benchmark_mutex);

  std::vector<Tensor3> batch;
  for (int b = 0; b < shape.batch; ++b)
    batch.push_back(random_input(shape.h, shape.w, shape.c, seed + std::uint64_t(b)));

#ifdef _OPENMP
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  volatile double sink = 0.0;
  for (int i = 0; i < 3; ++i) sink += run_op(op, batch[0]).data[0];

  std::vector<double> times;
  times.reserve(std::size_t(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const Tensor3& x : batch) sink += run_op(op, x).data[0];
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
#ifdef _OPENMP
  omp_set_num_threads(saved_threads);
#endif
  (void)sink;

  std::sort(times.begin(), times.end());
  const double median = times.size() % 2 == 1
                            ? times[times.size() / 2]
                            : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);

  CostReport rep;
  rep.op = to_string(op);
  rep.shape = shape;
  rep.madd = madd_of(op, shape.h, shape.w, shape.c);
  rep.memory_bytes = memory_of(op, shape.h, shape.w, shape.c, shape.batch);
  rep.params = 0;  // bare operators carry no weights in the comparison table
  rep.wall_ms = median;
  return rep;
}

std::vector<CostReport> benchmark_table(const std::vector<std::pair<int, int>>& shapes,
                                        int channels, int batch, int repeats, std::uint64_t seed,
                                        bool measure_time) {
  const AttentionKind ops[] = {AttentionKind::regular, AttentionKind::pooled,
                               AttentionKind::kao_kv, AttentionKind::kao_qkv};
  std::vector<CostReport> out;
  for (auto [h, w] : shapes) {
    std::vector<CostReport> row;
    for (AttentionKind op : ops) {
      OpShape shape{batch, h, w, channels};
      if (measure_time) {
        row.push_back(benchmark(op, shape, repeats, seed));
      } else {
        CostReport rep;
        rep.op = to_string(op);
        rep.shape = shape;
        rep.madd = madd_of(op, h, w, channels);
        rep.memory_bytes = memory_of(op, h, w, channels, batch);
        row.push_back(rep);
      }
    }
    const CostReport& base = row.front();
    for (CostReport& rep : row) {
      rep.madd_saving_pct = 100.0 * (1.0 - double(rep.madd) / double(base.madd));
      rep.memory_saving_pct = 100.0 * (1.0 - double(rep.memory_bytes) / double(base.memory_bytes));
      if (rep.wall_ms && base.wall_ms && *rep.wall_ms > 0.0)
        rep.speedup = *base.wall_ms / *rep.wall_ms;
      out.push_back(rep);
    }
  }
  return out;
}

AuditReport audit_network(const ArchSpec& arch, AttentionKind kind) {
  Network net = build_network(arch, kind, /*seed=*/0);
  AuditReport rep;
  for (const NodeCost& c : net.audit()) {
    if (c.params == 0 && c.madd == 0 && c.coeff_norm_params == 0) continue;
    rep.layers.push_back({c.name, c.kind, c.params, c.madd});
    rep.total_params += c.params;
    rep.total_madd += c.madd;
    rep.coeff_norm_params += c.coeff_norm_params;
  }
  rep.modules = net.module_count();
  return rep;
}

double madd_loglog_slope(AttentionKind op, const std::vector<int>& sizes, int channels) {
  // least-squares slope of log2(madd) against log2(h)
  const std::size_t n = sizes.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int h : sizes) {
    const double x = std::log2(double(h));
    const double y = std::log2(double(madd_of(op, h, h, channels)));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

std::string cost_table_csv(const std::vector<CostReport>& rows) {
  std::ostringstream os;
  os << "operator,input,madd,madd_saving_pct,memory_bytes,memory_saving_pct,wall_ms,speedup\n";
  os.setf(std::ios::fixed);
  for (const CostReport& r : rows) {
    os.precision(2);
    os << r.op << "," << r.shape.batch << "x" << r.shape.h << "x" << r.shape.w << "x" << r.shape.c
       << "," << r.madd << ",";
    os << r.madd_saving_pct << "," << r.memory_bytes << "," << r.memory_saving_pct << ",";
    os.precision(4);
    if (r.wall_ms)
      os << *r.wall_ms << "," << r.speedup;
    else
      os << "," << "";
    os << "\n";
  }
  return os.str();
}

std::string cost_table_markdown(const std::vector<CostReport>& rows) {
  std::ostringstream os;
  os << "| Input | Operator | MAdd | Cost Saving | Memory | Memory Saving | Time | Speedup |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  os.setf(std::ios::fixed);
  for (const CostReport& r : rows) {
    os.precision(2);
    os << "| " << r.shape.batch << "x" << r.shape.h << "^2x" << r.shape.c << " | "
       << display_name(r.op) << " | " << format_millions(r.madd) << " | " << r.madd_saving_pct
       << "% | " << format_mb(r.memory_bytes) << " | " << r.memory_saving_pct << "% | ";
    if (r.wall_ms) {
      os.precision(1);
      os << *r.wall_ms << "ms | " << r.speedup << "x |\n";
    } else {
      os << "- | - |\n";
    }
  }
  return os.str();
}

std::string audit_csv(const AuditReport& report) {
  std::ostringstream os;
  os << "layer,kind,params,madd\n";
  for (const AuditRow& r : report.layers)
    os << r.name << "," << r.kind << "," << r.params << "," << r.madd << "\n";
  os << "total,," << report.total_params << "," << report.total_madd << "\n";
  os << "coeff_norm_params,," << report.coeff_norm_params << ",0\n";
  return os.str();
}

std::string audit_markdown(const AuditReport& report, bool per_layer) {
  std::ostringstream os;
  if (per_layer) {
    os << "| Layer | Kind | Params | MAdd |\n|---|---|---|---|\n";
    for (const AuditRow& r : report.layers)
      os << "| " << r.name << " | " << r.kind << " | " << r.params << " | " << r.madd << " |\n";
  }
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "\nmodules: " << report.modules << "\n";
  os << "total params: " << format_millions(report.total_params)
     << " (+" << report.coeff_norm_params << " coefficient-norm params if counted)\n";
  os.precision(1);
  os << "total MAdd: " << format_millions(report.total_madd) << "\n";
  return os.str();
}

}  // namespace kan
