#pragma once

#include <cstdint>
#include <vector>

#include "kan/network.hpp"

namespace kan {

struct SgdMomentum {
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  void step(const std::vector<std::vector<double>*>& params,
            const std::vector<std::vector<double>*>& grads);
};

// Seeded synthetic classification task: each class is a fixed sinusoidal
// pattern over the spatial grid (distinct frequency pair per class, phase
// shifted per channel) plus Gaussian noise.
Tensor3 toy_pattern(int h, int w, int c, int label, int classes);
Tensor3 toy_sample(int h, int w, int c, int label, int classes, std::uint64_t seed,
                   double noise_sd = 0.3);

struct SoftmaxLoss {
  double loss = 0.0;
  Batch dlogits;
};
// mean cross-entropy with a stable log-sum-exp; gradients are averaged
SoftmaxLoss softmax_cross_entropy(const Batch& logits, const std::vector<int>& labels);

struct ToyTrainResult {
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool passed = false;  // final < 0.5 * initial
};

ToyTrainResult toy_train(const ArchSpec& arch, AttentionKind kind, int steps, std::uint64_t seed,
                         int batch_size = 16, double lr = 0.05, double momentum = 0.9);

}  // namespace kan
