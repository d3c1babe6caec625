#include "kan/train.hpp"

#include <cmath>
#include <stdexcept>

#include "kan/rng.hpp"

namespace kan {

void SgdMomentum::step(const std::vector<std::vector<double>*>& params,
                       const std::vector<std::vector<double>*>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd: param/grad count mismatch");
  if (velocity.empty()) {
    velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      velocity[i].assign(params[i]->size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& v = velocity[i];
    std::vector<double>& p = *params[i];
    const std::vector<double>& g = *grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] - lr * g[j];
      p[j] += v[j];
    }
  }
}

Tensor3 toy_pattern(int h, int w, int c, int label, int classes) {
  if (label < 0 || label >= classes) throw std::invalid_argument("toy_pattern: bad label");
  // distinct frequency pair per class keeps the patterns linearly separable
  static const int fx[] = {1, 0, 1, 2, 2, 0, 3, 1};
  static const int fy[] = {0, 1, 1, 1, 0, 2, 1, 2};
  const int k = label % 8;
  Tensor3 t(h, w, c);
  for (int ch = 0; ch < c; ++ch) {
    const double phase = 2.0 * 3.14159265358979312 * ch / std::max(c, 1);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        t.at(i, j, ch) =
            std::sin(2.0 * 3.14159265358979312 * (fx[k] * i + fy[k] * j) / h + phase);
  }
  return t;
}

Tensor3 toy_sample(int h, int w, int c, int label, int classes, std::uint64_t seed,
                   double noise_sd) {
  Tensor3 t = toy_pattern(h, w, c, label, classes);
  CounterRng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += noise_sd * rng.normal(i);
  return t;
}

SoftmaxLoss softmax_cross_entropy(const Batch& logits, const std::vector<int>& labels) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
  SoftmaxLoss out;
  const double inv_b = 1.0 / double(logits.size());
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const Tensor3& z = logits[s];
    if (z.h != 1 || z.w != 1) throw shape_error("softmax_cross_entropy: expects 1x1xk logits");
    const int k = z.c;
    const int y = labels[s];
    if (y < 0 || y >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    double mx = z.at(0, 0, 0);
    for (int i = 1; i < k; ++i) mx = std::max(mx, z.at(0, 0, i));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += std::exp(z.at(0, 0, i) - mx);
    const double lse = mx + std::log(sum);
    out.loss += (lse - z.at(0, 0, y)) * inv_b;
    Tensor3 d(1, 1, k);
    for (int i = 0; i < k; ++i)
      d.at(0, 0, i) = (std::exp(z.at(0, 0, i) - lse) - (i == y ? 1.0 : 0.0)) * inv_b;
    out.dlogits.push_back(std::move(d));
  }
  return out;
}

ToyTrainResult toy_train(const ArchSpec& arch, AttentionKind kind, int steps, std::uint64_t seed,
                         int batch_size, double lr, double momentum) {
  Network net = build_network(arch, kind, seed);
  const Shape in = net.input_shape();
  const int classes = net.output_shape().c;

  SgdMomentum opt;
  opt.lr = lr;
  opt.momentum = momentum;
  auto params = net.param_views();
  auto grads = net.grad_views();

  ToyTrainResult result;
  CounterRng data_rng(seed ^ 0x7075ULL);
  for (int step = 0; step < steps; ++step) {
    Batch batch;
    std::vector<int> labels;
    for (int b = 0; b < batch_size; ++b) {
      const int label = (step * batch_size + b) % classes;
      labels.push_back(label);
      batch.push_back(toy_sample(in.h, in.w, in.c, label, classes,
                                 data_rng.bits(std::uint64_t(step) * 1000 + std::uint64_t(b))));
    }
    net.zero_grads();
    Batch logits = net.forward(batch, /*training=*/true);
    SoftmaxLoss sl = softmax_cross_entropy(logits, labels);
    net.backward(sl.dlogits);
    opt.step(params, grads);
    result.losses.push_back(sl.loss);
  }
  result.initial_loss = result.losses.front();
  result.final_loss = result.losses.back();
  result.passed = result.final_loss < 0.5 * result.initial_loss;
  return result;
}

}  // namespace kan
