#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kan/profiler.hpp"
#include "kan/targets.hpp"

using namespace kan;

namespace {
const std::string kData = KAN_DATA_DIR;
}

TEST_CASE("madd_of reproduces the worked operator costs") {
  CHECK(madd_of(AttentionKind::regular, 14, 14, 8) == 2LL * 196 * 196 * 8);  // 614,656
  CHECK(madd_of(AttentionKind::pooled, 14, 14, 8) == 196LL * 49 * 8 * 2);    // 153,664
  CHECK(madd_of(AttentionKind::kao_kv, 14, 14, 8) == 2LL * 196 * 28 * 8);    // 87,808
  CHECK(madd_of(AttentionKind::kao_kv, 28, 28, 8) == 2LL * 784 * 56 * 8);    // 702,464
  CHECK(madd_of(AttentionKind::kao_qkv, 56, 56, 8) == 2LL * 112 * 112 * 8);  // 200,704
}

TEST_CASE("operator MAdd and savings match the published table within tolerance") {
  TargetTable targets = load_targets(kData + "/targets.csv");
  CHECK(targets.version == "targets-v1");
  auto rows = benchmark_table({{14, 14}, {28, 28}, {56, 56}}, 8, 8, 10, 1, /*measure_time=*/false);
  REQUIRE(rows.size() == 12);
  for (const CostReport& r : rows) {
    const TargetRow* madd_t = targets.find("table2_madd_m", r.op, r.shape.h);
    REQUIRE(madd_t != nullptr);
    INFO(r.op << " @ " << r.shape.h);
    CHECK(target_passes(double(r.madd) / 1e6, *madd_t));
    if (r.op != "regular") {
      const TargetRow* cost_t = targets.find("table2_cost_saving_pp", r.op, r.shape.h);
      const TargetRow* mem_t = targets.find("table2_mem_saving_pp", r.op, r.shape.h);
      REQUIRE(cost_t != nullptr);
      REQUIRE(mem_t != nullptr);
      CHECK(target_passes(r.madd_saving_pct, *cost_t));
      CHECK(target_passes(r.memory_saving_pct, *mem_t));
    }
  }
}

TEST_CASE("memory model: coefficient buffers dominate regular attention") {
  // E at 14^2, batch 8 is 196^2 * 8 * 4B ~ 1.23MB; it and its softmax dwarf O
  long long e_bytes = 196LL * 196 * 8 * 4;
  long long total = memory_of(AttentionKind::regular, 14, 14, 8, 8);
  CHECK(e_bytes == 1229312);
  CHECK(total > e_bytes);
  CHECK(double(2 * e_bytes) / double(total) > 0.95);
}

TEST_CASE("complexity exponents: fitted slopes are 4, 3, 2 within 0.1") {
  const std::vector<int> sizes{8, 16, 32, 64};
  CHECK(std::abs(madd_loglog_slope(AttentionKind::regular, sizes, 8) - 4.0) < 0.1);
  CHECK(std::abs(madd_loglog_slope(AttentionKind::kao_kv, sizes, 8) - 3.0) < 0.1);
  CHECK(std::abs(madd_loglog_slope(AttentionKind::kao_qkv, sizes, 8) - 2.0) < 0.1);
}

TEST_CASE("benchmark: analytic fields are deterministic and consistent") {
  OpShape shape{2, 8, 8, 4};
  CostReport a = benchmark(AttentionKind::kao_qkv, shape, 10, 7);
  CostReport b = benchmark(AttentionKind::kao_qkv, shape, 10, 7);
  CHECK(a.madd == madd_of(AttentionKind::kao_qkv, 8, 8, 4));
  CHECK(a.madd == b.madd);
  CHECK(a.memory_bytes == b.memory_bytes);
  CHECK(a.wall_ms.has_value());
  CHECK(*a.wall_ms >= 0.0);
  CHECK_THROWS_AS(benchmark(AttentionKind::kao_qkv, shape, 0, 7), std::invalid_argument);
}

TEST_CASE("architecture audits hit the published parameter and MAdd columns") {
  TargetTable targets = load_targets(kData + "/targets.csv");
  ArchSpec kanet = parse_arch_file(kData + "/kanet.arch", 1000);
  ArchSpec mobilenet = parse_arch_file(kData + "/mobilenetv2.arch", 1000);

  struct Case {
    const char* key;
    const ArchSpec* arch;
    AttentionKind kind;
  };
  const Case cases[] = {
      {"kanet_kv", &kanet, AttentionKind::kao_kv},
      {"kanet_qkv", &kanet, AttentionKind::kao_qkv},
      {"attnnet", &kanet, AttentionKind::regular},
      {"attnnet_pool", &kanet, AttentionKind::pooled},
      {"mobilenetv2", &mobilenet, AttentionKind::kao_kv},
  };
  for (const Case& c : cases) {
    AuditReport rep = audit_network(*c.arch, c.kind);
    INFO(c.key << ": params=" << rep.total_params << " madd=" << rep.total_madd);
    const TargetRow* pt = targets.find("arch_params_m", c.key, 224);
    const TargetRow* mt = targets.find("arch_madd_m", c.key, 224);
    REQUIRE(pt != nullptr);
    REQUIRE(mt != nullptr);
    CHECK(target_passes(double(rep.total_params) / 1e6, *pt));
    CHECK(target_passes(double(rep.total_madd) / 1e6, *mt));
    // the open counting question: including coefficient-norm params must stay in tolerance
    CHECK(target_passes(double(rep.total_params + rep.coeff_norm_params) / 1e6, *pt));

    long long sum_params = 0, sum_madd = 0;
    for (const AuditRow& row : rep.layers) {
      sum_params += row.params;
      sum_madd += row.madd;
    }
    CHECK(sum_params == rep.total_params);
    CHECK(sum_madd == rep.total_madd);
  }

  // all four attention kinds share one headline parameter count
  AuditReport kv = audit_network(kanet, AttentionKind::kao_kv);
  AuditReport qkv = audit_network(kanet, AttentionKind::kao_qkv);
  AuditReport reg = audit_network(kanet, AttentionKind::regular);
  AuditReport pool = audit_network(kanet, AttentionKind::pooled);
  CHECK(kv.total_params == qkv.total_params);
  CHECK(kv.total_params == reg.total_params);
  CHECK(kv.total_params == pool.total_params);
  CHECK(kv.modules == 17);
}

TEST_CASE("report writers emit the expected row structure") {
  auto rows = benchmark_table({{8, 8}}, 4, 2, 10, 3, /*measure_time=*/false);
  REQUIRE(rows.size() == 4);
  std::string csv = cost_table_csv(rows);
  CHECK(csv.find("operator,input,madd,") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
  CHECK(csv.find("kao_qkv,2x8x8x4") != std::string::npos);

  std::string md = cost_table_markdown(rows);
  CHECK(md.find("| Input | Operator | MAdd |") == 0);
  CHECK(md.find("KAO_QKV") != std::string::npos);
}

TEST_CASE("target predicate handles both tolerance forms") {
  TargetRow rel{"x", "op", 0, 100.0, 0.05, 0.0};
  CHECK(target_passes(104.9, rel));
  CHECK_FALSE(target_passes(105.1, rel));
  TargetRow abs{"x", "op", 0, 0.01, 0.10, 0.005};
  CHECK(target_passes(0.0125, abs));  // inside the print quantum
  CHECK_FALSE(target_passes(0.016, abs));
  TargetRow min{"speed_min", "op", 0, 10.0, 0.0, 0.0};
  CHECK(target_passes(11.0, min));
  CHECK_FALSE(target_passes(9.0, min));
}
