#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <mutex>

#include "kan/grad.hpp"
#include "kan/network.hpp"
#include "kan/tensor_ops.hpp"
#include "naive_ops.hpp"

using namespace kan;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// naive dense conv with TF-style same padding
Tensor3 oracle_conv(const Tensor3& x, const Matrix& w, int k, int stride) {
  const int oh = (x.h + stride - 1) / stride, ow = (x.w + stride - 1) / stride;
  const int pt = std::max((oh - 1) * stride + k - x.h, 0) / 2;
  const int pl = std::max((ow - 1) * stride + k - x.w, 0) / 2;
  Tensor3 out(oh, ow, w.rows);
  for (int o = 0; o < w.rows; ++o)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        double acc = 0;
        for (int c = 0; c < x.c; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int i = a * stride - pt + ky, j = b * stride - pl + kx;
              if (i < 0 || i >= x.h || j < 0 || j >= x.w) continue;
              acc += x.at(i, j, c) * w.at(o, (c * k + ky) * k + kx);
            }
        out.at(a, b, o) = acc;
      }
  return out;
}

Tensor3 oracle_dw(const Tensor3& x, const Matrix& w, int stride) {
  const int oh = (x.h + stride - 1) / stride, ow = (x.w + stride - 1) / stride;
  const int pt = std::max((oh - 1) * stride + 3 - x.h, 0) / 2;
  const int pl = std::max((ow - 1) * stride + 3 - x.w, 0) / 2;
  Tensor3 out(oh, ow, x.c);
  for (int c = 0; c < x.c; ++c)
    for (int a = 0; a < oh; ++a)
      for (int b = 0; b < ow; ++b) {
        double acc = 0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int i = a * stride - pt + ky, j = b * stride - pl + kx;
            if (i < 0 || i >= x.h || j < 0 || j >= x.w) continue;
            acc += x.at(i, j, c) * w.at(c, ky * 3 + kx);
          }
        out.at(a, b, c) = acc;
      }
  return out;
}

Tensor3 oracle_bn_default(const Tensor3& x) {
  // default inference stats: mean 0, var 1, gamma 1, beta 0
  Tensor3 out = x;
  const double inv = 1.0 / std::sqrt(1.0 + kBnEps);
  for (double& v : out.data) v *= inv;
  return out;
}

Tensor3 oracle_relu6(const Tensor3& x) {
  Tensor3 out = x;
  for (double& v : out.data) v = std::min(std::max(v, 0.0), 6.0);
  return out;
}

Tensor3 oracle_concat(const Tensor3& a, const Tensor3& b) {
  Tensor3 out(a.h, a.w, a.c + b.c);
  for (int i = 0; i < a.h; ++i)
    for (int j = 0; j < a.w; ++j) {
      for (int k = 0; k < a.c; ++k) out.at(i, j, k) = a.at(i, j, k);
      for (int k = 0; k < b.c; ++k) out.at(i, j, a.c + k) = b.at(i, j, k);
    }
  return out;
}

void check_close(const Tensor3& a, const Tensor3& b, double tol) {
  REQUIRE(a.same_shape(b));
  double mx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
  CHECK(mx < tol);
}

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("conv2d stride-2 same padding follows the ceil(in/2) law") {
  for (int in : {224, 28, 15, 7}) {
    Tensor3 x = naive::random_tensor(in, in, 2, std::uint64_t(in));
    Matrix w = naive::random_matrix(4, 2 * 9, std::uint64_t(in) + 1);
    Tensor3 y = conv2d_forward(x, w, 3, 2);
    CHECK(y.h == (in + 1) / 2);
    CHECK(y.w == (in + 1) / 2);
    check_close(y, oracle_conv(x, w, 3, 2), 1e-12);
  }
}

TEST_CASE("dwconv3x3 matches the naive loop at both strides") {
  for (int stride : {1, 2}) {
    Tensor3 x = naive::random_tensor(5, 6, 3, 7);
    Matrix w = naive::random_matrix(3, 9, 8);
    check_close(dwconv3x3_forward(x, w, stride), oracle_dw(x, w, stride), 1e-12);
  }
}

TEST_CASE("layer backwards match central differences") {
  Tensor3 x = naive::random_tensor(4, 5, 3, 100);

  SUBCASE("conv2d") {
    Matrix w = naive::random_matrix(4, 3 * 9, 101);
    Tensor3 g = naive::random_tensor(2, 3, 4, 102);
    Conv2dGrads cg = conv2d_backward(x, w, 3, 2, g);
    auto fx = [&](const std::vector<double>& v) {
      Tensor3 xv = x;
      xv.data = v;
      return dot(conv2d_forward(xv, w, 3, 2).data, g.data);
    };
    CHECK(gradcheck(fx, x.data, cg.dx.data, kEps, kTol).passed);
    auto fw = [&](const std::vector<double>& v) {
      Matrix wv = w;
      wv.data = v;
      return dot(conv2d_forward(x, wv, 3, 2).data, g.data);
    };
    CHECK(gradcheck(fw, w.data, cg.dw.data, kEps, kTol).passed);
  }

  SUBCASE("dwconv3x3") {
    Matrix w = naive::random_matrix(3, 9, 103);
    Tensor3 g = naive::random_tensor(4, 5, 3, 104);
    Conv2dGrads cg = dwconv3x3_backward(x, w, 1, g);
    auto fx = [&](const std::vector<double>& v) {
      Tensor3 xv = x;
      xv.data = v;
      return dot(dwconv3x3_forward(xv, w, 1).data, g.data);
    };
    CHECK(gradcheck(fx, x.data, cg.dx.data, kEps, kTol).passed);
    auto fw = [&](const std::vector<double>& v) {
      Matrix wv = w;
      wv.data = v;
      return dot(dwconv3x3_forward(x, wv, 1).data, g.data);
    };
    CHECK(gradcheck(fw, w.data, cg.dw.data, kEps, kTol).passed);
  }

  SUBCASE("batchnorm training mode over a batch") {
    std::vector<Tensor3> xs{naive::random_tensor(3, 3, 2, 105), naive::random_tensor(3, 3, 2, 106)};
    std::vector<double> gamma{1.2, 0.8}, beta{0.1, -0.2};
    std::vector<Tensor3> g{naive::random_tensor(3, 3, 2, 107), naive::random_tensor(3, 3, 2, 108)};
    BnCache cache;
    (void)batchnorm_train_forward(xs, gamma, beta, cache);
    BnGrads bg = batchnorm_train_backward(xs, gamma, cache, g);

    // flatten both batch elements into one vector for the checker
    auto flat = [&](const std::vector<Tensor3>& ts) {
      std::vector<double> v;
      for (const Tensor3& t : ts) v.insert(v.end(), t.data.begin(), t.data.end());
      return v;
    };
    auto unflat = [&](const std::vector<double>& v) {
      std::vector<Tensor3> ts = xs;
      std::size_t off = 0;
      for (Tensor3& t : ts) {
        std::copy(v.begin() + long(off), v.begin() + long(off + t.size()), t.data.begin());
        off += t.size();
      }
      return ts;
    };
    auto f = [&](const std::vector<double>& v) {
      BnCache c2;
      std::vector<Tensor3> ys = batchnorm_train_forward(unflat(v), gamma, beta, c2);
      double s = 0;
      for (std::size_t i = 0; i < ys.size(); ++i) s += dot(ys[i].data, g[i].data);
      return s;
    };
    CHECK(gradcheck(f, flat(xs), flat(bg.dx), kEps, kTol).passed);

    auto fg = [&](const std::vector<double>& v) {
      BnCache c2;
      std::vector<Tensor3> ys = batchnorm_train_forward(xs, v, beta, c2);
      double s = 0;
      for (std::size_t i = 0; i < ys.size(); ++i) s += dot(ys[i].data, g[i].data);
      return s;
    };
    CHECK(gradcheck(fg, gamma, bg.dgamma, kEps, kTol).passed);
  }

  SUBCASE("batchnorm inference mode") {
    std::vector<double> gamma{1.2, 0.8, 1.0}, beta{0.1, -0.2, 0.0};
    std::vector<double> mean{0.2, -0.1, 0.3}, var{1.5, 0.7, 1.1};
    Tensor3 g = naive::random_tensor(4, 5, 3, 109);
    BnGrads bg = batchnorm_infer_backward(x, gamma, mean, var, g);
    auto f = [&](const std::vector<double>& v) {
      Tensor3 xv = x;
      xv.data = v;
      return dot(batchnorm_infer(xv, gamma, beta, mean, var).data, g.data);
    };
    CHECK(gradcheck(f, x.data, bg.dx[0].data, kEps, kTol).passed);
  }

  SUBCASE("relu6 away from its kinks") {
    Tensor3 xr = naive::random_tensor(4, 5, 3, 110, 0.1, 5.9);
    for (std::size_t i = 0; i < xr.size(); ++i)
      if (i % 3 == 0) xr.data[i] = -1.0 - xr.data[i];  // exercise the clipped region too
    Tensor3 g = naive::random_tensor(4, 5, 3, 111);
    Tensor3 dx = relu6_backward(xr, g);
    auto f = [&](const std::vector<double>& v) {
      Tensor3 xv = xr;
      xv.data = v;
      return dot(relu6_forward(xv).data, g.data);
    };
    CHECK(gradcheck(f, xr.data, dx.data, kEps, kTol).passed);
  }

  SUBCASE("global average pool and fully connected") {
    Tensor3 g(1, 1, 3);
    g.at(0, 0, 0) = 0.3; g.at(0, 0, 1) = -0.7; g.at(0, 0, 2) = 1.1;
    Tensor3 dp = global_avgpool_backward(x.h, x.w, g);
    auto fp = [&](const std::vector<double>& v) {
      Tensor3 xv = x;
      xv.data = v;
      return dot(global_avgpool_forward(xv).data, g.data);
    };
    CHECK(gradcheck(fp, x.data, dp.data, kEps, 1e-9).passed);

    Tensor3 xin = naive::random_tensor(1, 1, 6, 112);
    Matrix w = naive::random_matrix(4, 6, 113);
    std::vector<double> bias{0.1, 0.2, -0.1, 0.0};
    Tensor3 gf = naive::random_tensor(1, 1, 4, 114);
    FcGrads fg = fc_backward(xin, w, gf);
    auto ff = [&](const std::vector<double>& v) {
      Matrix wv = w;
      wv.data = v;
      return dot(fc_forward(xin, wv, bias).data, gf.data);
    };
    CHECK(gradcheck(ff, w.data, fg.dw.data, kEps, 1e-9).passed);
  }
}

TEST_CASE("base module with identity weights doubles the input through the residual") {
  ModuleSpec m{"base", 1, 3, 3, 1, AttentionKind::kao_kv};
  Network net = build_module_network(m, 4, 4, 1);

  auto* dw = dynamic_cast<DwConvLayer*>(net.find_layer("module.dw"));
  REQUIRE(dw != nullptr);
  for (std::size_t i = 0; i < dw->w.size(); ++i) dw->w.data[i] = 0.0;
  for (int c = 0; c < 3; ++c) dw->w.at(c, 4) = 1.0;  // center tap

  auto* proj = dynamic_cast<ConvLayer*>(net.find_layer("module.project.conv"));
  REQUIRE(proj != nullptr);
  for (std::size_t i = 0; i < proj->w.size(); ++i) proj->w.data[i] = 0.0;
  for (int c = 0; c < 3; ++c) proj->w.at(c, c) = 1.0;

  // make both batch norms exact identities: unit variance minus eps
  for (const char* name : {"module.dwbn", "module.project.bn"}) {
    auto* bn = dynamic_cast<BatchNormLayer*>(net.find_layer(name));
    REQUIRE(bn != nullptr);
    for (double& v : bn->running_var) v = 1.0 - kBnEps;
  }

  Tensor3 x = naive::random_tensor(4, 4, 3, 5, 0.1, 1.0);  // inside the relu6 linear band
  Tensor3 y = forward_module(net, x);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-12));
}

TEST_CASE("base_skip module forward matches a naive per-pixel oracle") {
  ModuleSpec m{"base_skip", 2, 3, 5, 1, AttentionKind::kao_kv};
  Network net = build_module_network(m, 4, 4, 77);
  Tensor3 x = naive::random_tensor(4, 4, 3, 9);

  auto* expand = dynamic_cast<ConvLayer*>(net.find_layer("module.expand.conv"));
  auto* dw = dynamic_cast<DwConvLayer*>(net.find_layer("module.dw"));
  auto* proj = dynamic_cast<ConvLayer*>(net.find_layer("module.project.conv"));
  REQUIRE(expand != nullptr);
  REQUIRE(dw != nullptr);
  REQUIRE(proj != nullptr);

  Tensor3 branch = oracle_relu6(oracle_bn_default(oracle_conv(x, expand->w, 1, 1)));
  Tensor3 stack = oracle_concat(branch, x);
  Tensor3 mid = oracle_relu6(oracle_bn_default(oracle_dw(stack, dw->w, 1)));
  Tensor3 want = oracle_bn_default(oracle_conv(mid, proj->w, 1, 1));

  check_close(forward_module(net, x), want, 1e-10);
}

TEST_CASE("attn_skip module forward matches a naive per-pixel oracle") {
  ModuleSpec m{"attn_skip", 2, 3, 3, 1, AttentionKind::kao_kv};
  Network net = build_module_network(m, 4, 4, 33);
  Tensor3 x = naive::random_tensor(4, 4, 3, 11);

  auto* expand = dynamic_cast<ConvLayer*>(net.find_layer("module.expand.conv"));
  auto* dw = dynamic_cast<DwConvLayer*>(net.find_layer("module.dw"));
  auto* attnl = dynamic_cast<AttentionLayer*>(net.find_layer("module.attn"));
  auto* proj = dynamic_cast<ConvLayer*>(net.find_layer("module.project.conv"));
  REQUIRE(expand != nullptr);
  REQUIRE(dw != nullptr);
  REQUIRE(attnl != nullptr);
  REQUIRE(proj != nullptr);

  Tensor3 conv_path = oracle_relu6(oracle_bn_default(oracle_conv(x, expand->w, 1, 1)));
  conv_path = oracle_relu6(oracle_bn_default(oracle_dw(conv_path, dw->w, 1)));

  // attention path: kao_kv on Wv-transformed values, plus the extra skip
  Tensor3 values(x.h, x.w, x.c);
  for (int i = 0; i < x.h; ++i)
    for (int j = 0; j < x.w; ++j)
      for (int o = 0; o < x.c; ++o) {
        double acc = 0;
        for (int c = 0; c < x.c; ++c) acc += attnl->wv.at(o, c) * x.at(i, j, c);
        values.at(i, j, o) = acc;
      }
  auto ctx_keys = naive::context(x);
  auto ctx_vals = naive::context(values);
  Tensor3 attn_path(x.h, x.w, x.c);
  for (int i = 0; i < x.h; ++i)
    for (int j = 0; j < x.w; ++j) {
      std::vector<double> o = naive::attend(naive::fiber(x, i, j), ctx_keys, ctx_vals);
      for (int k = 0; k < x.c; ++k) attn_path.at(i, j, k) = o[std::size_t(k)] + x.at(i, j, k);
    }

  Tensor3 stack = oracle_concat(conv_path, attn_path);
  Tensor3 projected = oracle_bn_default(oracle_conv(stack, proj->w, 1, 1));
  Tensor3 want = projected;
  for (std::size_t i = 0; i < want.size(); ++i) want.data[i] += x.data[i];  // inner residual

  check_close(forward_module(net, x), want, 1e-10);
}

TEST_CASE("attention module output spatial dims follow (h/s, w/s)") {
  for (int s : {1, 2}) {
    ModuleSpec m{"attn", 2, 3, 4, s, AttentionKind::kao_qkv};
    Network net = build_module_network(m, 8, 6, 2);
    Tensor3 y = forward_module(net, naive::random_tensor(8, 6, 3, 3));
    CHECK(y.h == (8 + s - 1) / s);
    CHECK(y.w == (6 + s - 1) / s);
    CHECK(y.c == 4);
  }
}

TEST_CASE("AttnModule and AttnSkipModule have identical parameter counts and MAdd") {
  for (AttentionKind kind :
       {AttentionKind::regular, AttentionKind::pooled, AttentionKind::kao_kv, AttentionKind::kao_qkv}) {
    ModuleSpec a{"attn", 6, 8, 12, 1, kind};
    ModuleSpec b{"attn_skip", 6, 8, 12, 1, kind};
    Network na = build_module_network(a, 14, 14, 4);
    Network nb = build_module_network(b, 14, 14, 4);
    CHECK(na.param_count() == nb.param_count());
    CHECK(na.total_madd() == nb.total_madd());
  }
}

TEST_CASE("BaseSkipModule saves exactly c_in x c_in conv weights over BaseModule") {
  auto conv_weights = [](Network& n) {
    long long total = 0;
    for (const NodeCost& c : n.audit())
      if (c.kind == "conv" || c.kind == "dwconv") total += c.params;
    return total;
  };
  ModuleSpec base{"base", 6, 8, 12, 1, AttentionKind::kao_kv};
  ModuleSpec skip{"base_skip", 6, 8, 12, 1, AttentionKind::kao_kv};
  Network nb = build_module_network(base, 14, 14, 4);
  Network ns = build_module_network(skip, 14, 14, 4);
  CHECK(conv_weights(nb) - conv_weights(ns) == 8 * 8);
}

TEST_CASE("module gradients pass the checker end to end") {
  for (const char* kind : {"base_skip", "attn_skip"}) {
    ModuleSpec m{kind, 2, 2, 2, 1, AttentionKind::kao_kv};
    Network net = build_module_network(m, 3, 3, 15);
    Tensor3 x = naive::random_tensor(3, 3, 2, 16, 0.05, 0.6);
    Tensor3 g = naive::random_tensor(3, 3, 2, 17);

    net.zero_grads();
    Batch out = net.forward({x}, true);
    net.backward({g});

    auto params = net.param_views();
    auto grads = net.grad_views();
    REQUIRE(params.size() == grads.size());
    std::mutex net_mutex;  // the closure mutates shared network state
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto f = [&](const std::vector<double>& v) {
        std::lock_guard<std::mutex> lock(net_mutex);
        std::vector<double> saved = *params[p];
        *params[p] = v;
        double loss = dot(net.forward({x}, true).at(0).data, g.data);
        *params[p] = saved;
        return loss;
      };
      GradCheckReport rep = gradcheck(f, *params[p], *grads[p], kEps, kTol);
      INFO(kind << " param block " << p);
      CHECK(rep.passed);
    }
    // restore cached forward state consumed by the parameter sweeps
    (void)net.forward({x}, true);
  }
}

TEST_CASE("build_network reproduces the published table") {
  ArchSpec arch = parse_arch_file(std::string(KAN_DATA_DIR) + "/kanet.arch", 1000);
  validate_arch(arch);
  Network net = build_network(arch, AttentionKind::kao_kv, 3);
  CHECK(net.module_count() == 17);

  // stage input spatial sizes chain 112,112,56,28,28,14,14,14,7,7,7
  std::vector<int> expected{112, 112, 56, 28, 28, 14, 14, 14, 7, 7, 7};
  std::vector<int> got;
  for (std::size_t i = 1; i < arch.stages.size() - 1; ++i) got.push_back(arch.stages[i].in_spatial);
  CHECK(got == expected);

  // stem: 3x3x3 -> 32 = 864 weights + 64 batch norm
  auto audit = net.audit();
  CHECK(audit[1].name == "s0.Conv2D3x3.conv");
  CHECK(audit[1].params == 864);
  CHECK(audit[2].params == 64);

  CHECK(net.output_shape().c == 1000);
}

TEST_CASE("arch validation rejects inconsistent chaining, naming the stage") {
  CHECK_THROWS_AS(validate_arch(ArchSpec{}), std::invalid_argument);

  ArchSpec bad = parse_arch_text(
      "224x3 Conv2D3x3 - 32 1 2\n"
      "56x32 BaseModule 6 24 1 2\n"   // should be 112
      "28x24 Conv2D1x1 - 64 1 1\n"
      "28x64 AvgPoolFC - k 1 -\n",
      10);
  try {
    validate_arch(bad);
    FAIL("expected validation error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
    CHECK(std::string(e.what()).find("56") != std::string::npos);
  }
}

TEST_CASE("full KANet forward on a random 224x224x3 input is finite") {
  ArchSpec arch = parse_arch_file(std::string(KAN_DATA_DIR) + "/kanet.arch", 1000);
  Network net = build_network(arch, AttentionKind::kao_kv, 9);
  Tensor3 x = naive::random_tensor(224, 224, 3, 1234);
  Batch out = net.forward({x}, false);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].c == 1000);
  for (double v : out[0].data) CHECK(std::isfinite(v));
}
