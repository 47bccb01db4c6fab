#include "ponnet/model/ponnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ponnet/common/rng.hpp"
#include "ponnet/gradcore/init.hpp"

namespace ponnet::model {

using grad::Graph;
using grad::Mode;
using grad::Shape;
using grad::ShapeError;
using grad::Tensor;

int decide(double p_dc, double p_ndc) { return p_ndc > p_dc ? kNDC : kDC; }

template <typename T>
PonNet<T>::PonNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const bool att = config_.has_attention();
  if (config_.two_streams()) {
    streams_.push_back(build_stream("rgb", 3, att));
    streams_.push_back(build_stream("depth", 3, att));
  } else {
    switch (config_.input_mode) {
      case InputMode::rgb: streams_.push_back(build_stream("rgb", 3, att)); break;
      case InputMode::depth: streams_.push_back(build_stream("depth", 3, att)); break;
      case InputMode::rgbd: streams_.push_back(build_stream("rgbd", 6, att)); break;
    }
  }

  const int d = config_.output_dim;
  int head_in = d;
  if (config_.variant == Variant::full) {
    fusion_ = true;
    fuse_r_.w = add_param("fusion.W_r", {std::size_t(d), std::size_t(d)}, Init::lecun, d);
    fuse_r_.b = add_param("fusion.b_r", {std::size_t(d)}, Init::zero, d);
    fuse_d_.w = add_param("fusion.W_d", {std::size_t(d), std::size_t(d)}, Init::lecun, d);
    fuse_d_.b = add_param("fusion.b_d", {std::size_t(d)}, Init::zero, d);
    fuse_v_.w = add_param("fusion.V", {std::size_t(d), 1}, Init::lecun, d);
  } else if (config_.variant == Variant::type4) {
    head_in = 2 * d;
  }
  head_in += 4;
  for (std::size_t i = 0; i < config_.head_widths.size(); ++i) {
    head_.push_back(add_dense("head.fc" + std::to_string(i), head_in, config_.head_widths[i], Init::he));
    head_in = config_.head_widths[i];
  }
  head_.push_back(add_dense("head.out", head_in, 2 * config_.heads, Init::lecun, true));
}

template <typename T>
std::size_t PonNet<T>::add_param(const std::string& name, Shape shape, Init init, std::size_t fan_in,
                                 bool split_heads) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw std::logic_error("duplicate parameter name " + name);
  std::vector<T> values(grad::shape_size(shape), T{0});
  auto fill = [&](std::span<T> out, std::uint64_t seed) {
    if (init == Init::he) grad::he_uniform(out, fan_in, seed);
    else if (init == Init::lecun) grad::lecun_uniform(out, fan_in, seed);
    else std::fill(out.begin(), out.end(), init == Init::one ? T{1} : T{0});
  };
  if (!split_heads) {
    fill(values, mix_seed(config_.seed, hash_name(name)));
  } else {
    // Leading axis for conv weights [2H,C,k,k], trailing for dense [D,2H].
    const std::size_t heads = static_cast<std::size_t>(config_.heads);
    const bool leading = shape.size() != 2;
    const std::size_t per_unit = leading ? values.size() / (2 * heads) : shape[0];
    std::vector<T> part(2 * per_unit);
    for (std::size_t h = 0; h < heads; ++h) {
      fill(part, mix_seed(config_.seed, hash_name(name + "/head" + std::to_string(h))));
      for (std::size_t u = 0; u < 2; ++u) {
        for (std::size_t e = 0; e < per_unit; ++e) {
          const std::size_t unit = 2 * h + u;
          const std::size_t at = leading ? unit * per_unit + e : e * 2 * heads + unit;
          values[at] = part[u * per_unit + e];
        }
      }
    }
  }
  params_.push_back(Tensor<T>::parameter(std::move(shape), std::move(values)));
  names_.push_back(name);
  return params_.size() - 1;
}

template <typename T>
typename PonNet<T>::Conv PonNet<T>::add_conv(const std::string& name, int in, int out, int k, int stride,
                                             Init init, bool split_heads) {
  Conv c;
  const std::size_t fan_in = static_cast<std::size_t>(in) * k * k;
  c.w = add_param(name + ".weight", {std::size_t(out), std::size_t(in), std::size_t(k), std::size_t(k)}, init,
                  fan_in, split_heads);
  c.b = add_param(name + ".bias", {std::size_t(out)}, Init::zero, fan_in);
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

template <typename T>
typename PonNet<T>::Norm PonNet<T>::add_norm(const std::string& name, int channels) {
  Norm n;
  n.gamma = add_param(name + ".gamma", {std::size_t(channels)}, Init::one, 1);
  n.beta = add_param(name + ".beta", {std::size_t(channels)}, Init::zero, 1);
  norms_.emplace_back(static_cast<std::size_t>(channels));
  norm_names_.push_back(name);
  n.state = norms_.size() - 1;
  return n;
}

template <typename T>
typename PonNet<T>::Dense PonNet<T>::add_dense(const std::string& name, int in, int out, Init init,
                                               bool split_heads) {
  Dense d;
  d.w = add_param(name + ".weight", {std::size_t(in), std::size_t(out)}, init, in, split_heads);
  d.b = add_param(name + ".bias", {std::size_t(out)}, Init::zero, in);
  return d;
}

template <typename T>
typename PonNet<T>::Block PonNet<T>::add_block(const std::string& name, int channels, int mid) {
  Block b;
  b.n0 = add_norm(name + ".bn0", channels);
  b.c0 = add_conv(name + ".conv0", channels, mid, 1, 1, Init::he);
  b.n1 = add_norm(name + ".bn1", mid);
  b.c1 = add_conv(name + ".conv1", mid, mid, 3, 1, Init::he);
  b.n2 = add_norm(name + ".bn2", mid);
  b.c2 = add_conv(name + ".conv2", mid, channels, 1, 1, Init::he);
  return b;
}

template <typename T>
typename PonNet<T>::Stream PonNet<T>::build_stream(const std::string& name, int in_channels, bool attention) {
  Stream s;
  s.name = name;
  s.in_channels = in_channels;
  int c = in_channels;
  for (std::size_t i = 0; i < config_.pre_channels.size(); ++i) {
    const std::string p = name + ".pre" + std::to_string(i);
    s.pre_conv.push_back(add_conv(p + ".conv", c, config_.pre_channels[i], 3, 2, Init::he));
    s.pre_norm.push_back(add_norm(p + ".bn", config_.pre_channels[i]));
    c = config_.pre_channels[i];
  }
  {
    const std::string p = name + ".pre" + std::to_string(config_.pre_channels.size());
    s.pre_conv.push_back(add_conv(p + ".conv", c, config_.feature_channels, 3, 1, Init::he));
    s.pre_norm.push_back(add_norm(p + ".bn", config_.feature_channels));
    c = config_.feature_channels;
  }

  s.attention = attention;
  if (attention) {
    const std::string p = name + ".att";
    for (int i = 0; i < config_.attention_blocks; ++i)
      s.att_blocks.push_back(add_block(p + ".block" + std::to_string(i), c, config_.bottleneck_channels));
    s.att_norm = add_norm(p + ".bn", c);
    s.class_conv = add_conv(p + ".class_conv", c, 2 * config_.heads, 1, 1, Init::lecun, true);
    s.class_norm = add_norm(p + ".class_bn", 2 * config_.heads);
    s.att_conv = add_conv(p + ".att_conv", 2, 1, 1, 1, Init::lecun);
  }

  for (std::size_t i = 0; i < config_.post_channels.size(); ++i) {
    const std::string p = name + ".post" + std::to_string(i);
    s.post_conv.push_back(add_conv(p + ".conv", c, config_.post_channels[i], 3, i == 0 ? 2 : 1, Init::he));
    s.post_norm.push_back(add_norm(p + ".bn", config_.post_channels[i]));
    c = config_.post_channels[i];
  }
  if (config_.variant == Variant::type1) {
    for (int i = 0; i < config_.deep_extra_blocks; ++i)
      s.post_blocks.push_back(add_block(name + ".post.block" + std::to_string(i), c, std::max(1, c / 4)));
    if (!s.post_blocks.empty()) s.post_final_norm = add_norm(name + ".post.bn", c);
  }
  s.fc = add_dense(name + ".post.fc", c, config_.output_dim, Init::lecun);
  return s;
}

template <typename T>
Tensor<T> PonNet<T>::conv(Graph<T>& g, const Conv& c, const Tensor<T>& x) const {
  return grad::conv2d(g, x, params_[c.w], params_[c.b], c.stride, c.pad);
}

template <typename T>
Tensor<T> PonNet<T>::norm(Graph<T>& g, const Norm& n, const Tensor<T>& x, Mode mode) {
  return grad::batch_norm(g, x, params_[n.gamma], params_[n.beta], norms_[n.state], mode);
}

template <typename T>
Tensor<T> PonNet<T>::dense(Graph<T>& g, const Dense& d, const Tensor<T>& x) const {
  return grad::dense(g, x, params_[d.w], params_[d.b]);
}

template <typename T>
Tensor<T> PonNet<T>::block(Graph<T>& g, const Block& b, const Tensor<T>& x, Mode mode) {
  auto t = conv(g, b.c0, grad::relu(g, norm(g, b.n0, x, mode)));
  t = conv(g, b.c1, grad::relu(g, norm(g, b.n1, t, mode)));
  t = conv(g, b.c2, grad::relu(g, norm(g, b.n2, t, mode)));
  return grad::add(g, x, t);
}

template <typename T>
StreamResult<T> PonNet<T>::run_stream(Graph<T>& g, const Stream& s, const Tensor<T>& x, Mode mode) {
  StreamResult<T> r;
  r.name = s.name;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < s.pre_conv.size(); ++i) h = grad::relu(g, norm(g, s.pre_norm[i], conv(g, s.pre_conv[i], h), mode));
  r.features = h;

  if (s.attention) {
    Tensor<T> t = h;
    for (const Block& b : s.att_blocks) t = block(g, b, t, mode);
    t = grad::relu(g, norm(g, s.att_norm, t, mode));
    const Tensor<T> cls = norm(g, s.class_norm, conv(g, s.class_conv, t), mode);
    r.branch_logits = grad::global_avg_pool(g, cls);
    // The map is read from the first head's class channels only.
    const Tensor<T> first = grad::slice_channels(g, cls, 0, 2);
    r.attention = grad::sigmoid(g, grad::relu(g, conv(g, s.att_conv, first)));
    h = grad::attention_modulate(g, h, r.attention);
  }
  r.weighted = h;

  for (std::size_t i = 0; i < s.post_conv.size(); ++i) h = grad::relu(g, norm(g, s.post_norm[i], conv(g, s.post_conv[i], h), mode));
  for (const Block& b : s.post_blocks) h = block(g, b, h, mode);
  if (!s.post_blocks.empty()) h = grad::relu(g, norm(g, s.post_final_norm, h, mode));
  r.output = dense(g, s.fc, grad::global_avg_pool(g, h));
  return r;
}

namespace {

template <typename T>
void check_image(const Tensor<T>& x, const char* what, std::size_t n, int side) {
  if (!x.defined()) throw ShapeError(std::string("forward: missing ") + what + " input");
  const Shape want{n, 3, std::size_t(side), std::size_t(side)};
  if (x.shape() != want) {
    throw ShapeError(std::string("forward: ") + what + " input must be " + grad::shape_str(want) + ", got " +
                     grad::shape_str(x.shape()) +
                     (x.rank() == 4 && x.dim(1) == 1 ? " (raw depth must be colorized first)" : ""));
  }
}

// Channel-wise concatenation of two [N,3,s,s] constants.
template <typename T>
Tensor<T> early_fuse(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t n = a.dim(0), plane = a.dim(2) * a.dim(3);
  std::vector<T> out;
  out.reserve(2 * a.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto* pa = a.values().data() + i * 3 * plane;
    const auto* pb = b.values().data() + i * 3 * plane;
    out.insert(out.end(), pa, pa + 3 * plane);
    out.insert(out.end(), pb, pb + 3 * plane);
  }
  return Tensor<T>::constant({n, 6, a.dim(2), a.dim(3)}, std::move(out));
}

}  // namespace

template <typename T>
ForwardResult<T> PonNet<T>::forward(Graph<T>& g, const Batch<T>& batch, Mode mode) {
  const std::size_t n = batch.size();
  if (n == 0) throw ShapeError("forward: empty batch");
  if (batch.heuristic.shape() != Shape{n, 4}) throw ShapeError("forward: heuristic input must be [N,4]");
  for (T v : batch.heuristic.values())
    if (!(v > T{0})) throw std::invalid_argument("forward: heuristic input values must be positive");

  ForwardResult<T> out;
  for (const Stream& s : streams_) {
    Tensor<T> x;
    if (s.name == "rgb") {
      check_image(batch.rgb, "rgb", n, config_.input_side);
      x = batch.rgb;
    } else if (s.name == "depth") {
      check_image(batch.depth, "depth", n, config_.input_side);
      x = batch.depth;
    } else {
      check_image(batch.rgb, "rgb", n, config_.input_side);
      check_image(batch.depth, "depth", n, config_.input_side);
      x = early_fuse(batch.rgb, batch.depth);
    }
    out.streams.push_back(run_stream(g, s, x, mode));
  }

  if (fusion_) {
    const Tensor<T>& o_r = out.streams[0].output;
    const Tensor<T>& o_d = out.streams[1].output;
    const Tensor<T> undefined;
    const auto e_r = grad::dense(g, grad::tanh(g, dense(g, fuse_r_, o_r)), params_[fuse_v_.w], undefined);
    const auto e_d = grad::dense(g, grad::tanh(g, dense(g, fuse_d_, o_d)), params_[fuse_v_.w], undefined);
    out.alpha = grad::softmax_rows(g, grad::concat_features(g, {e_r, e_d}));
    out.fused = grad::convex_combine(g, out.alpha, {o_r, o_d});
  } else if (out.streams.size() == 2) {
    out.fused = grad::concat_features(g, {out.streams[0].output, out.streams[1].output});
  } else {
    out.fused = out.streams[0].output;
  }

  Tensor<T> z = grad::concat_features(g, {out.fused, batch.heuristic});
  for (std::size_t i = 0; i + 1 < head_.size(); ++i) z = grad::relu(g, dense(g, head_[i], z));
  out.logits = dense(g, head_.back(), z);
  return out;
}

template <typename T>
Tensor<T> PonNet<T>::total_loss(Graph<T>& g, const ForwardResult<T>& result, const HeadLabels& labels,
                                grad::Reduction reduction) const {
  const std::size_t heads = static_cast<std::size_t>(config_.heads);
  if (labels.size() != heads) {
    throw std::invalid_argument("total_loss: model has " + std::to_string(heads) + " heads but " +
                                std::to_string(labels.size()) + " label sets were given");
  }
  const std::size_t n = result.logits.dim(0);
  std::vector<Tensor<T>> targets;
  for (const auto& l : labels) {
    if (l.size() != n) throw std::invalid_argument("total_loss: label count does not match batch size");
    targets.push_back(grad::one_hot<T>(l, 2));
  }
  std::vector<T> head_weights;
  for (std::size_t h = 0; h < heads; ++h) head_weights.push_back(static_cast<T>(config_.head_weight(int(h))));

  auto term = [&](const Tensor<T>& logits) {
    std::vector<Tensor<T>> parts;
    for (std::size_t h = 0; h < heads; ++h) {
      parts.push_back(grad::softmax_cross_entropy(g, grad::slice_features(g, logits, 2 * h, 2 * h + 2), targets[h],
                                                  reduction));
    }
    return grad::weighted_sum(g, parts, head_weights);
  };

  std::vector<Tensor<T>> terms;
  std::vector<T> weights;
  for (const auto& s : result.streams) {
    if (!s.branch_logits.defined()) continue;
    terms.push_back(term(s.branch_logits));
    weights.push_back(static_cast<T>(s.name == "depth" ? config_.lambda_d : config_.lambda_r));
  }
  terms.push_back(term(result.logits));
  weights.push_back(static_cast<T>(config_.lambda_p));
  return grad::weighted_sum(g, terms, weights);
}

template <typename T>
std::vector<ForwardOutput> PonNet<T>::outputs(const ForwardResult<T>& result) const {
  const std::size_t n = result.logits.dim(0);
  const std::size_t heads = static_cast<std::size_t>(config_.heads);
  std::vector<ForwardOutput> out(n);
  auto pairs = [&](const Tensor<T>& logits, std::size_t i, bool softmax) {
    std::vector<std::array<double, 2>> v(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      std::array<double, 2> row{double(logits.values()[i * 2 * heads + 2 * h]),
                                double(logits.values()[i * 2 * heads + 2 * h + 1])};
      if (softmax) grad::softmax_inplace<double>(row);
      v[h] = row;
    }
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    ForwardOutput& o = out[i];
    o.p = pairs(result.logits, i, true);
    for (const auto& s : result.streams) {
      if (!s.attention.defined()) continue;
      const std::size_t plane = s.attention.dim(2) * s.attention.dim(3);
      const auto* a = s.attention.values().data() + i * plane;
      std::vector<double> map(a, a + plane);
      auto logits = pairs(s.branch_logits, i, false);
      if (s.name == "depth") {
        o.a_d = std::move(map);
        o.branch_d = std::move(logits);
      } else {
        o.a_r = std::move(map);
        o.branch_r = std::move(logits);
      }
    }
    if (result.alpha.defined()) {
      o.alpha_r = double(result.alpha.values()[2 * i]);
      o.alpha_d = double(result.alpha.values()[2 * i + 1]);
    }
    const std::size_t d = result.fused.dim(1);
    for (std::size_t k = 0; k < d; ++k) o.m.push_back(double(result.fused.values()[i * d + k]));
  }
  return out;
}

template <typename T>
const Tensor<T>& PonNet<T>::parameter(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t PonNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
void PonNet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
std::vector<grad::NamedBlob> PonNet<T>::state() const {
  std::vector<grad::NamedBlob> blobs;
  const std::string doc = to_json(config_).dump();
  blobs.push_back({"config", {doc.size()}, std::vector<double>(doc.begin(), doc.end())});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto v = params_[i].values();
    blobs.push_back({names_[i], params_[i].shape(), std::vector<double>(v.begin(), v.end())});
  }
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const auto& s = norms_[i];
    blobs.push_back({norm_names_[i] + ".running_mean", {s.running_mean.size()},
                     std::vector<double>(s.running_mean.begin(), s.running_mean.end())});
    blobs.push_back({norm_names_[i] + ".running_var", {s.running_var.size()},
                     std::vector<double>(s.running_var.begin(), s.running_var.end())});
  }
  return blobs;
}

template <typename T>
void PonNet<T>::load_state(const std::vector<grad::NamedBlob>& blobs) {
  std::map<std::string, const grad::NamedBlob*> by_name;
  for (const auto& b : blobs) by_name[b.name] = &b;
  auto find = [&](const std::string& name, const Shape& shape) -> const grad::NamedBlob& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw grad::CheckpointError("checkpoint lacks " + name);
    if (it->second->shape != shape) {
      throw grad::CheckpointError("checkpoint entry " + name + " has shape " + grad::shape_str(it->second->shape) +
                                  ", model expects " + grad::shape_str(shape));
    }
    return *it->second;
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& b = find(names_[i], params_[i].shape());
    auto dst = params_[i].mutable_values();
    std::transform(b.values.begin(), b.values.end(), dst.begin(), [](double v) { return static_cast<T>(v); });
  }
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    auto& s = norms_[i];
    const auto& m = find(norm_names_[i] + ".running_mean", {s.running_mean.size()});
    const auto& v = find(norm_names_[i] + ".running_var", {s.running_var.size()});
    std::transform(m.values.begin(), m.values.end(), s.running_mean.begin(), [](double x) { return T(x); });
    std::transform(v.values.begin(), v.values.end(), s.running_var.begin(), [](double x) { return T(x); });
  }
}

template <typename T>
void PonNet<T>::save(const std::filesystem::path& path) const {
  grad::write_checkpoint(path, state());
}

template <typename T>
PonNet<T> PonNet<T>::load(const std::filesystem::path& path) {
  const auto blobs = grad::read_checkpoint(path);
  auto it = std::find_if(blobs.begin(), blobs.end(), [](const auto& b) { return b.name == "config"; });
  if (it == blobs.end()) throw grad::CheckpointError(path.string() + ": no model config");
  std::string doc;
  for (double c : it->values) doc.push_back(static_cast<char>(c));
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(doc));
  } catch (const std::exception& e) {
    throw grad::CheckpointError(path.string() + ": bad model config: " + e.what());
  }
  PonNet net(config);
  net.load_state(blobs);
  return net;
}

template class PonNet<float>;
template class PonNet<double>;

}  // namespace ponnet::model
