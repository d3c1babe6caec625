#include "kan/network.hpp"

#include <cmath>
#include <stdexcept>

#include "kan/grad.hpp"
#include "kan/tensor_ops.hpp"

namespace kan {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

void xavier_fill(Matrix& w, int fan_in, int fan_out, CounterRng rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = rng.uniform(i, -a, a);
}

void accumulate(Tensor3& acc, const Tensor3& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += x.data[i];
}

}  // namespace

// ---- ConvLayer ----

ConvLayer::ConvLayer(int c_in, int c_out, int ksize, int stride, CounterRng rng)
    : w(c_out, c_in * ksize * ksize), gw(c_out, c_in * ksize * ksize),
      c_in_(c_in), c_out_(c_out), ksize_(ksize), stride_(stride) {
  xavier_fill(w, c_in * ksize * ksize, c_out * ksize * ksize, rng);
}

Shape ConvLayer::infer_shape(const std::vector<Shape>& ins) const {
  const Shape& in = ins.at(0);
  if (in.c != c_in_) throw shape_error("conv: input channel mismatch");
  return {ceil_div(in.h, stride_), ceil_div(in.w, stride_), c_out_};
}

Batch ConvLayer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) out.push_back(conv2d_forward(x, w, ksize_, stride_));
  return out;
}

void ConvLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                         const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Conv2dGrads g = conv2d_backward(xs[s], w, ksize_, stride_, dout[s]);
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += g.dw.data[i];
    accumulate((*dins.at(0))[s], g.dx);
  }
}

void ConvLayer::collect_params(std::vector<std::vector<double>*>& ps,
                               std::vector<std::vector<double>*>& gs) {
  ps.push_back(&w.data);
  gs.push_back(&gw.data);
}

// ---- DwConvLayer ----

DwConvLayer::DwConvLayer(int c, int stride, CounterRng rng)
    : w(c, 9), gw(c, 9), c_(c), stride_(stride) {
  xavier_fill(w, 9, 9, rng);
}

Shape DwConvLayer::infer_shape(const std::vector<Shape>& ins) const {
  const Shape& in = ins.at(0);
  if (in.c != c_) throw shape_error("dwconv: input channel mismatch");
  return {ceil_div(in.h, stride_), ceil_div(in.w, stride_), c_};
}

Batch DwConvLayer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) out.push_back(dwconv3x3_forward(x, w, stride_));
  return out;
}

void DwConvLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                           const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Conv2dGrads g = dwconv3x3_backward(xs[s], w, stride_, dout[s]);
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += g.dw.data[i];
    accumulate((*dins.at(0))[s], g.dx);
  }
}

void DwConvLayer::collect_params(std::vector<std::vector<double>*>& ps,
                                 std::vector<std::vector<double>*>& gs) {
  ps.push_back(&w.data);
  gs.push_back(&gw.data);
}

// ---- BatchNormLayer ----

BatchNormLayer::BatchNormLayer(int c)
    : gamma(std::size_t(c), 1.0), beta(std::size_t(c), 0.0),
      running_mean(std::size_t(c), 0.0), running_var(std::size_t(c), 1.0),
      dgamma(std::size_t(c), 0.0), dbeta(std::size_t(c), 0.0) {}

Batch BatchNormLayer::forward(const std::vector<const Batch*>& ins, bool training) {
  const Batch& xs = *ins.at(0);
  last_training_ = training;
  if (!training) {
    Batch out;
    for (const Tensor3& x : xs)
      out.push_back(batchnorm_infer(x, gamma, beta, running_mean, running_var));
    return out;
  }
  Batch out = batchnorm_train_forward(xs, gamma, beta, cache_);
  for (std::size_t c = 0; c < gamma.size(); ++c) {
    running_mean[c] = momentum * running_mean[c] + (1 - momentum) * cache_.mean[c];
    running_var[c] = momentum * running_var[c] + (1 - momentum) * cache_.var[c];
  }
  return out;
}

void BatchNormLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                              const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  if (last_training_) {
    BnGrads g = batchnorm_train_backward(xs, gamma, cache_, dout);
    for (std::size_t c = 0; c < gamma.size(); ++c) {
      dgamma[c] += g.dgamma[c];
      dbeta[c] += g.dbeta[c];
    }
    for (std::size_t s = 0; s < xs.size(); ++s) accumulate((*dins.at(0))[s], g.dx[s]);
    return;
  }
  for (std::size_t s = 0; s < xs.size(); ++s) {
    BnGrads g = batchnorm_infer_backward(xs[s], gamma, running_mean, running_var, dout[s]);
    for (std::size_t c = 0; c < gamma.size(); ++c) {
      dgamma[c] += g.dgamma[c];
      dbeta[c] += g.dbeta[c];
    }
    accumulate((*dins.at(0))[s], g.dx[0]);
  }
}

void BatchNormLayer::collect_params(std::vector<std::vector<double>*>& ps,
                                    std::vector<std::vector<double>*>& gs) {
  ps.push_back(&gamma);
  gs.push_back(&dgamma);
  ps.push_back(&beta);
  gs.push_back(&dbeta);
}

// ---- Relu6Layer ----

Batch Relu6Layer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) out.push_back(relu6_forward(x));
  return out;
}

void Relu6Layer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                          const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s)
    accumulate((*dins.at(0))[s], relu6_backward(xs[s], dout[s]));
}

// ---- AttentionLayer ----

AttentionLayer::AttentionLayer(AttentionKind kind, int c, int stride, CounterRng rng)
    : wv(c, c), gwv(c, c), attn_kind_(kind), c_(c), stride_(stride) {
  xavier_fill(wv, c, c, rng);
}

Shape AttentionLayer::infer_shape(const std::vector<Shape>& ins) const {
  const Shape& in = ins.at(0);
  if (in.c != c_) throw shape_error("attention: input channel mismatch");
  if (stride_ == 1) return in;
  return {ceil_div(in.h, stride_), ceil_div(in.w, stride_), c_};
}

Tensor3 AttentionLayer::apply_op(const Tensor3& x) const {
  AttnConfig cfg;
  cfg.wv = wv;
  switch (attn_kind_) {
    case AttentionKind::regular: return nonlocal_2d(x, cfg);
    case AttentionKind::pooled: return attn_pooled_2d(x, cfg);
    case AttentionKind::kao_kv: return kao_kv(x, cfg);
    case AttentionKind::kao_qkv: return kao_qkv(x, cfg);
  }
  throw std::logic_error("unreachable");
}

TensorAttnGrads AttentionLayer::op_backward(const Tensor3& x, const Tensor3& up) const {
  AttnConfig cfg;
  cfg.wv = wv;
  switch (attn_kind_) {
    case AttentionKind::regular: return backward_nonlocal_2d(x, up, cfg);
    case AttentionKind::pooled: return backward_attn_pooled_2d(x, up, cfg);
    case AttentionKind::kao_kv: return backward_kao_kv(x, up, cfg);
    case AttentionKind::kao_qkv: return backward_kao_qkv(x, up, cfg);
  }
  throw std::logic_error("unreachable");
}

Batch AttentionLayer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) {
    Tensor3 y = apply_op(x);
    if (stride_ > 1) y = avg_pool_2x2_ceil(y);
    out.push_back(std::move(y));
  }
  return out;
}

void AttentionLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                              const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Tensor3 up = dout[s];
    if (stride_ > 1) up = backward_avg_pool_2x2_ceil(xs[s].h, xs[s].w, up);
    TensorAttnGrads g = op_backward(xs[s], up);
    if (g.dwv) {
      for (std::size_t i = 0; i < gwv.size(); ++i) gwv.data[i] += g.dwv->data[i];
    }
    accumulate((*dins.at(0))[s], g.dt);
  }
}

void AttentionLayer::collect_params(std::vector<std::vector<double>*>& ps,
                                    std::vector<std::vector<double>*>& gs) {
  ps.push_back(&wv.data);
  gs.push_back(&gwv.data);
}

// ---- AddLayer ----

Shape AddLayer::infer_shape(const std::vector<Shape>& ins) const {
  const Shape &a = ins.at(0), &b = ins.at(1);
  if (a.h != b.h || a.w != b.w || a.c != b.c) throw shape_error("add: operand shape mismatch");
  return a;
}

Batch AddLayer::forward(const std::vector<const Batch*>& ins, bool) {
  const Batch &a = *ins.at(0), &b = *ins.at(1);
  Batch out;
  for (std::size_t s = 0; s < a.size(); ++s) {
    Tensor3 y = a[s];
    accumulate(y, b[s]);
    out.push_back(std::move(y));
  }
  return out;
}

void AddLayer::backward(const std::vector<const Batch*>&, const Batch& dout,
                        const std::vector<Batch*>& dins) {
  for (std::size_t s = 0; s < dout.size(); ++s) {
    accumulate((*dins.at(0))[s], dout[s]);
    accumulate((*dins.at(1))[s], dout[s]);
  }
}

// ---- ConcatLayer ----

Shape ConcatLayer::infer_shape(const std::vector<Shape>& ins) const {
  Shape out = ins.at(0);
  for (std::size_t i = 1; i < ins.size(); ++i) {
    if (ins[i].h != out.h || ins[i].w != out.w) throw shape_error("concat: spatial mismatch");
    out.c += ins[i].c;
  }
  return out;
}

Batch ConcatLayer::forward(const std::vector<const Batch*>& ins, bool) {
  const std::size_t batch = ins.at(0)->size();
  Batch out;
  for (std::size_t s = 0; s < batch; ++s) {
    int c_total = 0;
    for (const Batch* b : ins) c_total += (*b)[s].c;
    const Tensor3& first = (*ins[0])[s];
    Tensor3 y(first.h, first.w, c_total);
    int off = 0;
    for (const Batch* b : ins) {
      const Tensor3& x = (*b)[s];
      for (int k = 0; k < x.c; ++k)
        for (int i = 0; i < x.h; ++i)
          for (int j = 0; j < x.w; ++j) y.at(i, j, off + k) = x.at(i, j, k);
      off += x.c;
    }
    out.push_back(std::move(y));
  }
  return out;
}

void ConcatLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                           const std::vector<Batch*>& dins) {
  for (std::size_t s = 0; s < dout.size(); ++s) {
    int off = 0;
    for (std::size_t b = 0; b < ins.size(); ++b) {
      Tensor3& dx = (*dins[b])[s];
      for (int k = 0; k < dx.c; ++k)
        for (int i = 0; i < dx.h; ++i)
          for (int j = 0; j < dx.w; ++j) dx.at(i, j, k) += dout[s].at(i, j, off + k);
      off += dx.c;
    }
  }
}

// ---- GlobalAvgPoolLayer ----

Batch GlobalAvgPoolLayer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) out.push_back(global_avgpool_forward(x));
  return out;
}

void GlobalAvgPoolLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                                  const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s)
    accumulate((*dins.at(0))[s], global_avgpool_backward(xs[s].h, xs[s].w, dout[s]));
}

// ---- FcLayer ----

FcLayer::FcLayer(int in, int out, CounterRng rng)
    : w(out, in), gw(out, in), bias(std::size_t(out), 0.0), dbias(std::size_t(out), 0.0),
      in_(in), out_(out) {
  xavier_fill(w, in, out, rng);
}

Batch FcLayer::forward(const std::vector<const Batch*>& ins, bool) {
  Batch out;
  for (const Tensor3& x : *ins.at(0)) out.push_back(fc_forward(x, w, bias));
  return out;
}

void FcLayer::backward(const std::vector<const Batch*>& ins, const Batch& dout,
                       const std::vector<Batch*>& dins) {
  const Batch& xs = *ins.at(0);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    FcGrads g = fc_backward(xs[s], w, dout[s]);
    for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += g.dw.data[i];
    for (std::size_t i = 0; i < dbias.size(); ++i) dbias[i] += g.dbias[i];
    accumulate((*dins.at(0))[s], g.dx);
  }
}

void FcLayer::collect_params(std::vector<std::vector<double>*>& ps,
                             std::vector<std::vector<double>*>& gs) {
  ps.push_back(&w.data);
  gs.push_back(&gw.data);
  ps.push_back(&bias);
  gs.push_back(&dbias);
}

// ---- Network ----

Batch Network::forward(const Batch& input, bool training) {
  if (input.empty()) throw shape_error("forward: empty batch");
  const Shape in = input_shape();
  for (const Tensor3& t : input)
    if (t.h != in.h || t.w != in.w || t.c != in.c)
      throw shape_error("forward: input shape does not match the network input");
  values_.assign(nodes_.size(), Batch{});
  values_[0] = input;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    std::vector<const Batch*> ins;
    for (int src : nodes_[i].inputs) ins.push_back(&values_[std::size_t(src)]);
    values_[i] = nodes_[i].layer->forward(ins, training);
  }
  return values_.back();
}

void Network::backward(const Batch& dlogits) {
  if (values_.empty()) throw std::logic_error("backward: run forward first");
  value_grads_.assign(nodes_.size(), Batch{});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    value_grads_[i].clear();
    for (const Tensor3& v : values_[i]) value_grads_[i].emplace_back(v.h, v.w, v.c);
  }
  value_grads_.back() = dlogits;
  for (std::size_t i = nodes_.size(); i-- > 1;) {
    std::vector<const Batch*> ins;
    std::vector<Batch*> dins;
    for (int src : nodes_[i].inputs) {
      ins.push_back(&values_[std::size_t(src)]);
      dins.push_back(&value_grads_[std::size_t(src)]);
    }
    nodes_[i].layer->backward(ins, value_grads_[i], dins);
  }
}

void Network::zero_grads() {
  for (auto* g : grad_views())
    for (double& v : *g) v = 0.0;
}

std::vector<std::vector<double>*> Network::param_views() {
  std::vector<std::vector<double>*> ps, gs;
  for (auto& n : nodes_) n.layer->collect_params(ps, gs);
  return ps;
}

std::vector<std::vector<double>*> Network::grad_views() {
  std::vector<std::vector<double>*> ps, gs;
  for (auto& n : nodes_) n.layer->collect_params(ps, gs);
  return gs;
}

long long Network::param_count() const {
  long long total = 0;
  for (const auto& n : nodes_) total += n.layer->param_count();
  return total;
}

long long Network::coeff_norm_param_count() const {
  long long total = 0;
  for (const auto& n : nodes_) {
    const Shape in = n.inputs.empty() ? n.out_shape : nodes_[std::size_t(n.inputs[0])].out_shape;
    total += n.layer->coeff_norm_param_count(in);
  }
  return total;
}

std::vector<NodeCost> Network::audit() const {
  std::vector<NodeCost> out;
  for (const auto& n : nodes_) {
    const Shape in = n.inputs.empty() ? n.out_shape : nodes_[std::size_t(n.inputs[0])].out_shape;
    NodeCost c;
    c.name = n.name;
    c.kind = n.layer->kind();
    c.params = n.layer->param_count();
    c.madd = n.layer->madd(in, n.out_shape);
    c.coeff_norm_params = n.layer->coeff_norm_param_count(in);
    out.push_back(std::move(c));
  }
  return out;
}

long long Network::total_madd() const {
  long long total = 0;
  for (const NodeCost& c : audit()) total += c.madd;
  return total;
}

Layer* Network::find_layer(const std::string& name) {
  for (auto& n : nodes_)
    if (n.name == name) return n.layer.get();
  return nullptr;
}

// ---- builder ----

class NetworkBuilder {
 public:
  NetworkBuilder(Shape input, std::uint64_t seed) : rng_(seed) {
    NetworkNode n;
    n.name = "input";
    n.layer = std::make_unique<InputLayer>(input);
    n.out_shape = input;
    net_.nodes_.push_back(std::move(n));
  }

  int add(const std::string& name, std::unique_ptr<Layer> layer, std::vector<int> inputs) {
    std::vector<Shape> in_shapes;
    for (int i : inputs) in_shapes.push_back(net_.nodes_[std::size_t(i)].out_shape);
    NetworkNode n;
    n.name = name;
    n.out_shape = layer->infer_shape(in_shapes);
    n.layer = std::move(layer);
    n.inputs = std::move(inputs);
    net_.nodes_.push_back(std::move(n));
    return int(net_.nodes_.size()) - 1;
  }

  Shape shape(int idx) const { return net_.nodes_[std::size_t(idx)].out_shape; }
  CounterRng next_rng() { return rng_.fork(++layer_seed_); }

  int add_conv_bn_act(const std::string& prefix, int in, int c_out, int ksize, int stride,
                      bool act) {
    const Shape s = shape(in);
    int conv = add(prefix + ".conv",
                   std::make_unique<ConvLayer>(s.c, c_out, ksize, stride, next_rng()), {in});
    int bn = add(prefix + ".bn", std::make_unique<BatchNormLayer>(c_out), {conv});
    if (!act) return bn;
    return add(prefix + ".relu6", std::make_unique<Relu6Layer>(), {bn});
  }

  int add_dw_bn_act(const std::string& prefix, int in, int stride) {
    const Shape s = shape(in);
    int dw = add(prefix + ".dw", std::make_unique<DwConvLayer>(s.c, stride, next_rng()), {in});
    int bn = add(prefix + ".dwbn", std::make_unique<BatchNormLayer>(s.c), {dw});
    return add(prefix + ".dwrelu6", std::make_unique<Relu6Layer>(), {bn});
  }

  // expands one module into graph nodes; returns the output node index
  int add_module(const std::string& prefix, const ModuleSpec& m, int input) {
    const Shape in = shape(input);
    if (in.c != m.c_in) throw shape_error(prefix + ": module input channel mismatch");
    const bool is_attn = m.kind == "attn" || m.kind == "attn_skip";
    const bool is_skip_base = m.kind == "base_skip";
    if (m.kind != "base" && !is_skip_base && !is_attn)
      throw shape_error(prefix + ": unknown module kind " + m.kind);
    if (is_attn && m.r < 2) throw shape_error(prefix + ": attention modules need r >= 2");

    int stack = -1;
    if (m.kind == "base") {
      // expansion conv omitted at r=1 (inverted-residual convention)
      stack = m.r > 1 ? add_conv_bn_act(prefix + ".expand", input, m.r * m.c_in, 1, 1, true)
                      : input;
      stack = add_dw_bn_act(prefix, stack, m.s);
    } else if (is_skip_base) {
      const int e = (m.r - 1) * m.c_in;
      int branch = e > 0 ? add_conv_bn_act(prefix + ".expand", input, e, 1, 1, true) : -1;
      if (m.s == 1 && branch >= 0) {
        stack = add(prefix + ".concat", std::make_unique<ConcatLayer>(),
                    {branch, input});  // conv output then original input
      } else if (branch >= 0) {
        stack = branch;  // concat skip unavailable at s > 1
      } else {
        stack = input;  // r = 1: the input alone feeds the depthwise conv
      }
      stack = add_dw_bn_act(prefix, stack, m.s);
    } else {
      const int e = (m.r - 1) * m.c_in;
      int conv_path = add_conv_bn_act(prefix + ".expand", input, e, 1, 1, true);
      conv_path = add_dw_bn_act(prefix, conv_path, m.s);
      int attn_path = add(prefix + ".attn",
                          std::make_unique<AttentionLayer>(m.attention, m.c_in, m.s, next_rng()),
                          {input});
      if (m.kind == "attn_skip" && m.s == 1)
        attn_path = add(prefix + ".attnskip", std::make_unique<AddLayer>(), {attn_path, input});
      stack = add(prefix + ".concat", std::make_unique<ConcatLayer>(), {conv_path, attn_path});
    }
    int out = add_conv_bn_act(prefix + ".project", stack, m.c_out, 1, 1, /*act=*/false);
    if (m.s == 1 && m.c_in == m.c_out)
      out = add(prefix + ".residual", std::make_unique<AddLayer>(), {out, input});
    ++net_.module_count_;
    return out;
  }

  Network take() { return std::move(net_); }

 private:
  Network net_;
  CounterRng rng_;
  std::uint64_t layer_seed_ = 0;
};

Network build_network(const ArchSpec& arch, AttentionKind kind, std::uint64_t seed) {
  validate_arch(arch);
  const StageSpec& first = arch.stages.front();
  NetworkBuilder b({first.in_spatial, first.in_spatial, first.in_ch}, seed);
  int cur = 0;
  for (std::size_t si = 0; si < arch.stages.size(); ++si) {
    const StageSpec& st = arch.stages[si];
    const std::string prefix = "s" + std::to_string(si) + "." + st.op;
    if (st.op == "Conv2D3x3") {
      cur = b.add_conv_bn_act(prefix, cur, st.c, 3, st.s, true);
    } else if (st.op == "Conv2D1x1") {
      cur = b.add_conv_bn_act(prefix, cur, st.c, 1, st.s, true);
    } else if (st.op == "AvgPoolFC") {
      int pool = b.add(prefix + ".avgpool", std::make_unique<GlobalAvgPoolLayer>(), {cur});
      cur = b.add(prefix + ".fc",
                  std::make_unique<FcLayer>(b.shape(pool).c, st.c, b.next_rng()), {pool});
    } else {
      ModuleSpec m;
      m.kind = st.op == "BaseModule" ? "base"
               : st.op == "BaseSkipModule" ? "base_skip"
               : st.op == "AttnModule" ? "attn"
                                       : "attn_skip";
      m.r = st.r;
      m.c_out = st.c;
      m.attention = kind;
      for (int rep = 0; rep < st.n; ++rep) {
        m.c_in = b.shape(cur).c;
        m.s = rep == 0 ? st.s : 1;
        cur = b.add_module(prefix + ".m" + std::to_string(rep), m, cur);
      }
    }
  }
  return b.take();
}

Network build_module_network(const ModuleSpec& spec, int h, int w, std::uint64_t seed) {
  NetworkBuilder b({h, w, spec.c_in}, seed);
  b.add_module("module", spec, 0);
  return b.take();
}

Tensor3 forward_module(Network& module_net, const Tensor3& t) {
  return module_net.forward({t}, false).at(0);
}

}  // namespace kan
