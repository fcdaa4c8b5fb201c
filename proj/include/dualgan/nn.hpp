#pragma once

#include <vector>

#include "dualgan/common.hpp"

namespace dualgan::nn {

enum class OutputActivation { kSigmoid, kIdentity };
enum class InitScheme { kOrthogonal, kVarianceScaling };

// Dense feedforward network: ReLU hidden layers, sigmoid or identity head.
// weights[l] is (dims[l+1] x dims[l]); forward computes row-major batches,
// i.e. outputs = act(X * W^T + b^T) layer by layer.
struct Mlp {
  std::vector<Index> dims;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  OutputActivation output_activation = OutputActivation::kSigmoid;

  Index input_dim() const { return dims.front(); }
  Index output_dim() const { return dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  long step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-layer activations cached during a forward pass; layer 0 is the input.
struct ForwardCache {
  std::vector<Matrix> activations;   // size layer_count()+1
  Matrix head_unclamped;             // sigmoid head before the [eps,1-eps] clamp
};

struct Gradients {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;
  Matrix d_input;  // gradient w.r.t. the batch rows (for chaining G through D)
};

Mlp init_mlp(const std::vector<Index>& layer_dims, InitScheme scheme, Rng& rng,
             OutputActivation output_activation = OutputActivation::kSigmoid);

AdamState make_adam(const Mlp& mlp, double learning_rate = 1e-4, double beta1 = 0.9,
                    double beta2 = 0.999, double epsilon = 1e-8);

Matrix forward(const Mlp& mlp, const Matrix& batch);
Matrix forward(const Mlp& mlp, const Matrix& batch, ForwardCache& cache);

// -sum_i w_i [t_i log p_i + (1 - t_i) log(1 - p_i)]; predictions already clamped.
double bce_loss(const Vector& predictions, const Vector& targets);
double bce_loss(const Vector& predictions, const Vector& targets, const Vector& weights);

// Gradients of the weighted BCE loss on a sigmoid-head network.
Gradients backprop_bce(const Mlp& mlp, const ForwardCache& cache, const Vector& targets,
                       const Vector& weights);
Gradients backprop_bce(const Mlp& mlp, const ForwardCache& cache, const Vector& targets);

// Gradients given an upstream gradient on the network outputs (any head).
Gradients backprop_output_grad(const Mlp& mlp, const ForwardCache& cache,
                               const Matrix& d_outputs);

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state);

}  // namespace dualgan::nn
