#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kan/arch.hpp"
#include "kan/attention.hpp"
#include "kan/cost_model.hpp"
#include "kan/grad.hpp"
#include "kan/layers.hpp"
#include "kan/matrix.hpp"
#include "kan/rng.hpp"

namespace kan {

struct Shape {
  int h = 0, w = 0, c = 0;
};

using Batch = std::vector<Tensor3>;

// One node of the network graph. Forward consumes the producer batches and
// returns its own; backward receives the same inputs plus the output-gradient
// batch and accumulates into the input-gradient batches. Parameters are plain
// double vectors exposed for the optimizer.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Shape infer_shape(const std::vector<Shape>& ins) const = 0;
  virtual Batch forward(const std::vector<const Batch*>& ins, bool training) = 0;
  virtual void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                        const std::vector<Batch*>& dins) = 0;
  virtual void collect_params(std::vector<std::vector<double>*>& ps,
                              std::vector<std::vector<double>*>& gs) {
    (void)ps;
    (void)gs;
  }
  virtual long long param_count() const { return 0; }
  virtual long long coeff_norm_param_count(const Shape&) const { return 0; }
  virtual long long madd(const Shape& in, const Shape& out) const {
    (void)in;
    (void)out;
    return 0;
  }
};

class InputLayer final : public Layer {
 public:
  explicit InputLayer(Shape s) : shape_(s) {}
  const char* kind() const override { return "input"; }
  Shape infer_shape(const std::vector<Shape>&) const override { return shape_; }
  Batch forward(const std::vector<const Batch*>&, bool) override {
    throw std::logic_error("input node is fed directly");
  }
  void backward(const std::vector<const Batch*>&, const Batch&,
                const std::vector<Batch*>&) override {}

 private:
  Shape shape_;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(int c_in, int c_out, int ksize, int stride, CounterRng rng);
  const char* kind() const override { return "conv"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override;
  Batch forward(const std::vector<const Batch*>& ins, bool training) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
  void collect_params(std::vector<std::vector<double>*>& ps,
                      std::vector<std::vector<double>*>& gs) override;
  long long param_count() const override { return (long long)w.rows * w.cols; }
  long long madd(const Shape& in, const Shape& out) const override {
    return conv2d_madd(out.h, out.w, in.c, out.c, ksize_);
  }

  Matrix w, gw;

 private:
  int c_in_, c_out_, ksize_, stride_;
};

class DwConvLayer final : public Layer {
 public:
  DwConvLayer(int c, int stride, CounterRng rng);
  const char* kind() const override { return "dwconv"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override;
  Batch forward(const std::vector<const Batch*>& ins, bool training) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
  void collect_params(std::vector<std::vector<double>*>& ps,
                      std::vector<std::vector<double>*>& gs) override;
  long long param_count() const override { return (long long)w.rows * 9; }
  long long madd(const Shape&, const Shape& out) const override {
    return dwconv3x3_madd(out.h, out.w, out.c);
  }

  Matrix w, gw;

 private:
  int c_, stride_;
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(int c);
  const char* kind() const override { return "batchnorm"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override { return ins.at(0); }
  Batch forward(const std::vector<const Batch*>& ins, bool training) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
  void collect_params(std::vector<std::vector<double>*>& ps,
                      std::vector<std::vector<double>*>& gs) override;
  long long param_count() const override { return 2 * (long long)gamma.size(); }

  std::vector<double> gamma, beta, running_mean, running_var;
  std::vector<double> dgamma, dbeta;
  double momentum = 0.9;

 private:
  bool last_training_ = false;
  BnCache cache_;
};

class Relu6Layer final : public Layer {
 public:
  const char* kind() const override { return "relu6"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override { return ins.at(0); }
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
};

// Attention path of the Attn modules: the configured operator with a linear
// transform on the value matrix only, followed by a stride-s average pooling
// when s > 1. Output channels equal input channels.
class AttentionLayer final : public Layer {
 public:
  AttentionLayer(AttentionKind kind, int c, int stride, CounterRng rng);
  const char* kind() const override { return "attention"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override;
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
  void collect_params(std::vector<std::vector<double>*>& ps,
                      std::vector<std::vector<double>*>& gs) override;
  long long param_count() const override { return (long long)wv.rows * wv.cols; }
  long long coeff_norm_param_count(const Shape& in) const override {
    return 2 * attention_coeff_keys(attn_kind_, in.h, in.w);
  }
  long long madd(const Shape& in, const Shape&) const override {
    return attention_op_madd(attn_kind_, in.h, in.w, in.c, /*with_wv=*/true);
  }
  AttentionKind attention_kind() const { return attn_kind_; }

  Matrix wv, gwv;

 private:
  Tensor3 apply_op(const Tensor3& x) const;
  TensorAttnGrads op_backward(const Tensor3& x, const Tensor3& up) const;
  AttentionKind attn_kind_;
  int c_, stride_;
};

class AddLayer final : public Layer {
 public:
  const char* kind() const override { return "add"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override;
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
};

class ConcatLayer final : public Layer {
 public:
  const char* kind() const override { return "concat"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override;
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  const char* kind() const override { return "avgpool_global"; }
  Shape infer_shape(const std::vector<Shape>& ins) const override {
    return {1, 1, ins.at(0).c};
  }
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
};

class FcLayer final : public Layer {
 public:
  FcLayer(int in, int out, CounterRng rng);
  const char* kind() const override { return "fully_connected"; }
  Shape infer_shape(const std::vector<Shape>&) const override { return {1, 1, out_}; }
  Batch forward(const std::vector<const Batch*>& ins, bool) override;
  void backward(const std::vector<const Batch*>& ins, const Batch& dout,
                const std::vector<Batch*>& dins) override;
  void collect_params(std::vector<std::vector<double>*>& ps,
                      std::vector<std::vector<double>*>& gs) override;
  long long param_count() const override {
    return (long long)w.rows * w.cols + (long long)bias.size();
  }
  long long madd(const Shape& in, const Shape& out) const override {
    return fc_madd(in.c, out.c);
  }

  Matrix w, gw;
  std::vector<double> bias, dbias;

 private:
  int in_, out_;
};

struct NetworkNode {
  std::string name;
  std::unique_ptr<Layer> layer;
  std::vector<int> inputs;
  Shape out_shape;
};

struct NodeCost {
  std::string name;
  std::string kind;
  long long params = 0;
  long long madd = 0;
  long long coeff_norm_params = 0;
};

class Network {
 public:
  Batch forward(const Batch& input, bool training = false);
  // call after forward(training=true); dlogits matches the output batch
  void backward(const Batch& dlogits);
  void zero_grads();
  std::vector<std::vector<double>*> param_views();
  std::vector<std::vector<double>*> grad_views();

  long long param_count() const;
  long long coeff_norm_param_count() const;
  std::vector<NodeCost> audit() const;
  long long total_madd() const;

  Shape input_shape() const { return nodes_.front().out_shape; }
  Shape output_shape() const { return nodes_.back().out_shape; }
  int module_count() const { return module_count_; }
  const std::vector<NetworkNode>& graph() const { return nodes_; }
  Layer* find_layer(const std::string& name);

 private:
  friend class NetworkBuilder;
  std::vector<NetworkNode> nodes_;
  std::vector<Batch> values_;
  std::vector<Batch> value_grads_;
  int module_count_ = 0;
};

struct ModuleSpec {
  std::string kind;  // base | base_skip | attn | attn_skip
  int r = 1;
  int c_in = 1;
  int c_out = 1;
  int s = 1;
  AttentionKind attention = AttentionKind::kao_kv;
};

Network build_network(const ArchSpec& arch, AttentionKind kind, std::uint64_t seed);

// a network holding exactly one module (plus input), for module-level tests
Network build_module_network(const ModuleSpec& spec, int h, int w, std::uint64_t seed);
Tensor3 forward_module(Network& module_net, const Tensor3& t);

}  // namespace kan
