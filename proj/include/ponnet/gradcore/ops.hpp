#pragma once

#include <vector>

#include "ponnet/gradcore/tensor.hpp"

namespace ponnet::grad {

// Differentiable operations. Every operation validates its shapes, records
// itself on the graph and returns a fresh immutable tensor. Images use NCHW
// layout; feature matrices use [N, D].

/// Direct cross-correlation. x:[N,C,H,W], weight:[K,C,kh,kw], bias:[K].
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad);

/// x:[N,D] times weight:[D,E] plus bias:[E]. Pass an undefined bias for a
/// plain matrix product.
template <typename T>
Tensor<T> dense(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight,
                const Tensor<T>& bias);

enum class Mode { train, eval };

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
};

/// Per-channel normalization of x:[N,C,H,W] (or [N,C]).
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate:
///   running = (1 - momentum) * running + momentum * batch.
/// Eval mode uses the running statistics.
template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, Mode mode,
                     T momentum = T(0.1), T eps = T(1e-5));

enum class Activation { relu, sigmoid, tanh };

/// Elementwise activation. relu'(0) is taken as 0.
template <typename T>
Tensor<T> activation(Graph<T>& g, Activation kind, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& x) { return activation(g, Activation::relu, x); }
template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& x) { return activation(g, Activation::sigmoid, x); }
template <typename T>
Tensor<T> tanh(Graph<T>& g, const Tensor<T>& x) { return activation(g, Activation::tanh, x); }

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor);

/// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);

/// (1 + map) ⊙ features, with map:[N,1,H,W] broadcast over the C channels
/// of features:[N,C,H,W].
template <typename T>
Tensor<T> attention_modulate(Graph<T>& g, const Tensor<T>& features, const Tensor<T>& map);

/// Spatial mean, [N,C,H,W] -> [N,C].
template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& x);

/// Column-wise concatenation of [N,D_i] matrices.
template <typename T>
Tensor<T> concat_features(Graph<T>& g, const std::vector<Tensor<T>>& parts);

/// Columns [begin, end) of a [N,D] matrix.
template <typename T>
Tensor<T> slice_features(Graph<T>& g, const Tensor<T>& x, std::size_t begin, std::size_t end);

/// Channels [begin, end) of a [N,C,H,W] tensor.
template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& x, std::size_t begin, std::size_t end);

/// Row-wise softmax of a [N,M] matrix.
template <typename T>
Tensor<T> softmax_rows(Graph<T>& g, const Tensor<T>& x);

/// m[n,:] = sum_k alpha[n,k] * parts[k][n,:], alpha:[N,K], parts[k]:[N,D].
template <typename T>
Tensor<T> convex_combine(Graph<T>& g, const Tensor<T>& alpha, const std::vector<Tensor<T>>& parts);

enum class Reduction { sum, mean };

/// Cross-entropy of softmax(logits) against one-hot labels, both [N,M].
/// Uses the log-sum-exp form; Reduction::sum gives -sum_n sum_m y log p.
template <typename T>
Tensor<T> softmax_cross_entropy(Graph<T>& g, const Tensor<T>& logits, const Tensor<T>& labels,
                                Reduction reduction = Reduction::sum);

/// sum_i weights[i] * terms[i] over scalar tensors.
template <typename T>
Tensor<T> weighted_sum(Graph<T>& g, const std::vector<Tensor<T>>& terms,
                       const std::vector<T>& weights);

// Plain (non-recorded) helpers.

template <typename T>
T stable_sigmoid(T x);

/// Softmax of one row into `out`.
template <typename T>
void softmax_inplace(std::span<T> row);

/// Turns integer class labels into a one-hot [N,M] constant.
template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t classes);

}  // namespace ponnet::grad
