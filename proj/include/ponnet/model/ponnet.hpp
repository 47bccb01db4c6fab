#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ponnet/gradcore/checkpoint.hpp"
#include "ponnet/gradcore/ops.hpp"
#include "ponnet/model/config.hpp"

namespace ponnet::model {

/// Class indices of every 2-way head.
inline constexpr int kDC = 0;
inline constexpr int kNDC = 1;

/// One mini-batch of preprocessed inputs, all NCHW constants.
template <typename T>
struct Batch {
  grad::Tensor<T> rgb;        // [N,3,s,s]
  grad::Tensor<T> depth;      // [N,3,s,s], colorized depth
  grad::Tensor<T> heuristic;  // [N,4]
  std::size_t size() const { return heuristic.defined() ? heuristic.dim(0) : 0; }
};

/// Labels per head, labels[h][n] in {kDC, kNDC}.
using HeadLabels = std::vector<std::vector<int>>;

template <typename T>
struct StreamResult {
  std::string name;               // "rgb", "depth" or "rgbd"
  grad::Tensor<T> features;       // f_k [N,C_f,S,S]
  grad::Tensor<T> attention;      // a_k [N,1,S,S]; undefined without a branch
  grad::Tensor<T> weighted;       // w_k
  grad::Tensor<T> branch_logits;  // [N,2*heads]; undefined without a branch
  grad::Tensor<T> output;         // o_k [N,D_o]
};

template <typename T>
struct ForwardResult {
  std::vector<StreamResult<T>> streams;
  grad::Tensor<T> alpha;   // [N,2], full variant only
  grad::Tensor<T> fused;   // m
  grad::Tensor<T> logits;  // [N,2*heads]
};

/// Plain per-sample view of a forward pass.
struct ForwardOutput {
  std::vector<std::array<double, 2>> p;  // per head, sums to 1
  std::vector<double> a_r, a_d;          // S*S row-major, empty when absent
  std::vector<std::array<double, 2>> branch_r, branch_d;
  double alpha_r = 0.0, alpha_d = 0.0;   // zero unless fused
  std::vector<double> m;
};

/// argmax with an exact tie resolved to DC.
int decide(double p_dc, double p_ndc);

template <typename T>
class PonNet {
 public:
  explicit PonNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  ForwardResult<T> forward(grad::Graph<T>& g, const Batch<T>& batch, grad::Mode mode);

  /// J = lambda_r J_r + lambda_d J_d + lambda_p J_p, each J a cross-entropy
  /// summed over heads with the configured head weights. Streams without a
  /// branch contribute no term; an early-fused stream counts as r.
  grad::Tensor<T> total_loss(grad::Graph<T>& g, const ForwardResult<T>& result, const HeadLabels& labels,
                             grad::Reduction reduction = grad::Reduction::mean) const;

  std::vector<ForwardOutput> outputs(const ForwardResult<T>& result) const;

  std::vector<grad::Tensor<T>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const grad::Tensor<T>& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Parameters, batch-norm running statistics and the config document.
  std::vector<grad::NamedBlob> state() const;
  void load_state(const std::vector<grad::NamedBlob>& blobs);
  void save(const std::filesystem::path& path) const;
  static PonNet load(const std::filesystem::path& path);

 private:
  struct Conv {
    std::size_t w = 0, b = 0;
    int stride = 1, pad = 0;
  };
  struct Norm {
    std::size_t gamma = 0, beta = 0, state = 0;
  };
  struct Dense {
    std::size_t w = 0, b = 0;
  };
  struct Block {
    Norm n0, n1, n2;
    Conv c0, c1, c2;
  };
  struct Stream {
    std::string name;
    int in_channels = 3;
    std::vector<Conv> pre_conv;
    std::vector<Norm> pre_norm;
    bool attention = false;
    std::vector<Block> att_blocks;
    Norm att_norm, class_norm;
    Conv class_conv, att_conv;
    std::vector<Conv> post_conv;
    std::vector<Norm> post_norm;
    std::vector<Block> post_blocks;
    Norm post_final_norm;
    Dense fc;
  };

  enum class Init { he, lecun, zero, one };

  // split_heads: output units come in pairs, one pair per head, and each
  // pair is drawn from its own seed so that adding heads leaves the others'
  // initial values unchanged.
  std::size_t add_param(const std::string& name, grad::Shape shape, Init init, std::size_t fan_in,
                        bool split_heads = false);
  Conv add_conv(const std::string& name, int in, int out, int k, int stride, Init init,
                bool split_heads = false);
  Norm add_norm(const std::string& name, int channels);
  Dense add_dense(const std::string& name, int in, int out, Init init, bool split_heads = false);
  Block add_block(const std::string& name, int channels, int mid);
  Stream build_stream(const std::string& name, int in_channels, bool attention);

  grad::Tensor<T> conv(grad::Graph<T>& g, const Conv& c, const grad::Tensor<T>& x) const;
  grad::Tensor<T> norm(grad::Graph<T>& g, const Norm& n, const grad::Tensor<T>& x, grad::Mode mode);
  grad::Tensor<T> dense(grad::Graph<T>& g, const Dense& d, const grad::Tensor<T>& x) const;
  grad::Tensor<T> block(grad::Graph<T>& g, const Block& b, const grad::Tensor<T>& x, grad::Mode mode);
  StreamResult<T> run_stream(grad::Graph<T>& g, const Stream& s, const grad::Tensor<T>& x, grad::Mode mode);

  ModelConfig config_;
  std::vector<grad::Tensor<T>> params_;
  std::vector<std::string> names_;
  std::vector<grad::BatchNormState<T>> norms_;
  std::vector<std::string> norm_names_;
  std::vector<Stream> streams_;
  bool fusion_ = false;
  Dense fuse_r_, fuse_d_, fuse_v_;
  std::vector<Dense> head_;
};

extern template class PonNet<float>;
extern template class PonNet<double>;

}  // namespace ponnet::model
