#include "dualgan/nn.hpp"

#include <Eigen/QR>
#include <cmath>

namespace dualgan::nn {
namespace {

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) g(i, j) = rng.normal();
  return g;
}

// Orthogonal matrix via QR of a Gaussian draw, with sign correction so the
// distribution is Haar-uniform rather than biased by the QR convention.
Matrix orthogonal_matrix(Index rows, Index cols, Rng& rng) {
  const bool wide = cols > rows;
  const Index r = wide ? cols : rows;
  const Index c = wide ? rows : cols;
  Matrix g = gaussian_matrix(r, c, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  Matrix rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (Index j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) *= -1.0;
  return wide ? Matrix(q.transpose()) : q;
}

Matrix apply_hidden(const Matrix& z) { return z.cwiseMax(0.0); }

}  // namespace

Mlp init_mlp(const std::vector<Index>& layer_dims, InitScheme scheme, Rng& rng,
             OutputActivation output_activation) {
  if (layer_dims.size() < 2) throw ConfigError("init_mlp: need at least 2 layer dims");
  for (Index d : layer_dims)
    if (d < 1) throw ConfigError("init_mlp: layer dims must be >= 1");

  Mlp mlp;
  mlp.dims = layer_dims;
  mlp.output_activation = output_activation;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const Index fan_in = layer_dims[l];
    const Index fan_out = layer_dims[l + 1];
    Matrix w;
    if (scheme == InitScheme::kOrthogonal) {
      w = orthogonal_matrix(fan_out, fan_in, rng);
    } else {
      const double stddev = std::sqrt(1.0 / static_cast<double>(fan_in));
      w = stddev * gaussian_matrix(fan_out, fan_in, rng);
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Vector::Zero(fan_out));
  }
  return mlp;
}

AdamState make_adam(const Mlp& mlp, double learning_rate, double beta1, double beta2,
                    double epsilon) {
  AdamState st;
  st.learning_rate = learning_rate;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.epsilon = epsilon;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    st.m_w.push_back(Matrix::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
    st.v_w.push_back(Matrix::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
    st.m_b.push_back(Vector::Zero(mlp.biases[l].size()));
    st.v_b.push_back(Vector::Zero(mlp.biases[l].size()));
  }
  return st;
}

Matrix forward(const Mlp& mlp, const Matrix& batch, ForwardCache& cache) {
  if (batch.cols() != mlp.input_dim())
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                     " columns, network expects " + std::to_string(mlp.input_dim()));
  cache.activations.clear();
  cache.activations.reserve(mlp.layer_count() + 1);
  cache.activations.push_back(batch);
  Matrix a = batch;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    Matrix z = (a * mlp.weights[l].transpose()).rowwise() + mlp.biases[l].transpose();
    const bool last = (l + 1 == mlp.layer_count());
    if (!last) {
      a = apply_hidden(z);
    } else if (mlp.output_activation == OutputActivation::kSigmoid) {
      Matrix p = (1.0 + (-z.array()).exp()).inverse().matrix();
      cache.head_unclamped = p;
      a = p.array().min(1.0 - kProbEps).max(kProbEps).matrix();
    } else {
      cache.head_unclamped = z;
      a = z;
    }
    cache.activations.push_back(a);
  }
  return a;
}

Matrix forward(const Mlp& mlp, const Matrix& batch) {
  ForwardCache cache;
  return forward(mlp, batch, cache);
}

double bce_loss(const Vector& predictions, const Vector& targets, const Vector& weights) {
  if (predictions.size() != targets.size() || predictions.size() != weights.size())
    throw ShapeError("bce_loss: length mismatch");
  const auto p = predictions.array();
  const auto t = targets.array();
  return -(weights.array() * (t * p.log() + (1.0 - t) * (1.0 - p).log())).sum();
}

double bce_loss(const Vector& predictions, const Vector& targets) {
  return bce_loss(predictions, targets, Vector::Ones(predictions.size()));
}

namespace {

// Shared tail of backprop: given d(loss)/d(pre-activation of the head), walk
// the hidden layers back to the input.
Gradients backprop_from_head(const Mlp& mlp, const ForwardCache& cache, Matrix delta) {
  const std::size_t nl = mlp.layer_count();
  Gradients g;
  g.d_weights.resize(nl);
  g.d_biases.resize(nl);
  for (std::size_t li = nl; li-- > 0;) {
    const Matrix& a_prev = cache.activations[li];
    g.d_weights[li] = delta.transpose() * a_prev;
    g.d_biases[li] = delta.colwise().sum().transpose();
    Matrix d_prev = delta * mlp.weights[li];
    if (li > 0) {
      // ReLU mask from the stored hidden activation
      d_prev.array() *= (cache.activations[li].array() > 0.0).cast<double>();
      delta = std::move(d_prev);
    } else {
      g.d_input = std::move(d_prev);
    }
  }
  return g;
}

}  // namespace

Gradients backprop_bce(const Mlp& mlp, const ForwardCache& cache, const Vector& targets,
                       const Vector& weights) {
  if (mlp.output_dim() != 1)
    throw ShapeError("backprop_bce: needs a scalar sigmoid head");
  const Matrix& p = cache.activations.back();
  if (p.rows() != targets.size() || p.rows() != weights.size())
    throw ShapeError("backprop_bce: target/weight length mismatch");
  // d(loss)/dz = w * (p - t) for sigmoid + BCE
  Matrix delta = ((p.col(0) - targets).array() * weights.array()).matrix();
  return backprop_from_head(mlp, cache, delta);
}

Gradients backprop_bce(const Mlp& mlp, const ForwardCache& cache, const Vector& targets) {
  return backprop_bce(mlp, cache, targets, Vector::Ones(targets.size()));
}

Gradients backprop_output_grad(const Mlp& mlp, const ForwardCache& cache,
                               const Matrix& d_outputs) {
  Matrix delta;
  if (mlp.output_activation == OutputActivation::kSigmoid) {
    const auto p = cache.head_unclamped.array();
    delta = (d_outputs.array() * p * (1.0 - p)).matrix();
  } else {
    delta = d_outputs;
  }
  return backprop_from_head(mlp, cache, delta);
}

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state) {
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    if (!grads.d_weights[l].allFinite() || !grads.d_biases[l].allFinite())
      throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(l));
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    state.m_w[l] = state.beta1 * state.m_w[l] + (1.0 - state.beta1) * grads.d_weights[l];
    state.v_w[l] = state.beta2 * state.v_w[l].array().matrix() +
                   (1.0 - state.beta2) * grads.d_weights[l].array().square().matrix();
    state.m_b[l] = state.beta1 * state.m_b[l] + (1.0 - state.beta1) * grads.d_biases[l];
    state.v_b[l] = state.beta2 * state.v_b[l].array().matrix() +
                   (1.0 - state.beta2) * grads.d_biases[l].array().square().matrix();
    mlp.weights[l].array() -= state.learning_rate * (state.m_w[l].array() / bc1) /
                              ((state.v_w[l].array() / bc2).sqrt() + state.epsilon);
    mlp.biases[l].array() -= state.learning_rate * (state.m_b[l].array() / bc1) /
                             ((state.v_b[l].array() / bc2).sqrt() + state.epsilon);
  }
}

}  // namespace dualgan::nn
