#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "model_fixtures.hpp"
#include "ponnet/gradcore/adam.hpp"

using namespace ponnet;
using namespace ponnet::model;
using fixture::random_batch;
using fixture::random_labels;
using grad::Graph;
using grad::Mode;
using grad::Tensor;

namespace {

ModelConfig with_variant(Variant v, InputMode m = InputMode::rgbd) {
  ModelConfig c = ModelConfig::desk();
  c.variant = v;
  c.input_mode = m;
  return c;
}

std::set<std::string> names_of(const ModelConfig& c) {
  PonNet<double> net(c);
  return {net.parameter_names().begin(), net.parameter_names().end()};
}

template <typename T>
std::vector<T> vec(const Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TEST_CASE("model config round trip and validation") {
  ModelConfig c = ModelConfig::desk();
  c.variant = Variant::type3;
  c.input_mode = InputMode::depth;
  c.heads = 5;
  c.head_loss_weights = {1, 0.5, 0.5, 0.5, 0.5};
  c.seed = 99;
  CHECK(model_config_from_json(to_json(c)) == c);
  CHECK(to_json(c).at("version") == kModelConfigVersion);

  CHECK(ModelConfig::desk().feature_side() == 8);
  CHECK(ModelConfig::micro().feature_side() == 4);
  CHECK(ModelConfig::paper().feature_side() == 14);

  CHECK_THROWS_AS(with_variant(Variant::full, InputMode::rgb).validate(), ConfigError);
  CHECK_THROWS_AS(with_variant(Variant::type4, InputMode::depth).validate(), ConfigError);
  ModelConfig bad = ModelConfig::desk();
  bad.lambda_p = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ModelConfig::desk();
  bad.head_loss_weights = {1, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"variant", "type9"}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"version", 7}}), ConfigError);
  CHECK(model_config_from_json(nlohmann::json::object()) == ModelConfig::desk());
}

TEST_CASE("desk shapes") {
  PonNet<double> net(ModelConfig::desk());
  Graph<double> g;
  const auto r = net.forward(g, random_batch<double>(3, 32, 1), Mode::train);
  REQUIRE(r.streams.size() == 2);
  for (const auto& s : r.streams) {
    CHECK(s.features.shape() == grad::Shape{3, 32, 8, 8});
    CHECK(s.attention.shape() == grad::Shape{3, 1, 8, 8});
    CHECK(s.weighted.shape() == grad::Shape{3, 32, 8, 8});
    CHECK(s.branch_logits.shape() == grad::Shape{3, 2});
    CHECK(s.output.shape() == grad::Shape{3, 32});
  }
  CHECK(r.alpha.shape() == grad::Shape{3, 2});
  CHECK(r.fused.shape() == grad::Shape{3, 32});
  CHECK(r.logits.shape() == grad::Shape{3, 2});
  // Head input is D_o + 4.
  CHECK(net.parameter("head.fc0.weight").shape() == grad::Shape{36, 32});
  CHECK(net.parameter("head.fc1.weight").shape() == grad::Shape{32, 8});
  CHECK(net.parameter("head.out.weight").shape() == grad::Shape{8, 2});
  CHECK(net.parameter("fusion.W_r").shape() == grad::Shape{32, 32});
  CHECK(net.parameter("fusion.V").shape() == grad::Shape{32, 1});
  CHECK(net.parameter("rgb.att.class_conv.weight").shape() == grad::Shape{2, 32, 1, 1});
  CHECK(net.parameter("rgb.att.att_conv.weight").shape() == grad::Shape{1, 2, 1, 1});
}

TEST_CASE("published scale shapes") {
  PonNet<double> net(ModelConfig::paper());
  Graph<double> g;
  const auto r = net.forward(g, random_batch<double>(1, 56, 2), Mode::eval);
  CHECK(r.streams[0].features.shape() == grad::Shape{1, 256, 14, 14});
  CHECK(r.streams[0].attention.shape() == grad::Shape{1, 1, 14, 14});
  CHECK(r.streams[0].branch_logits.shape() == grad::Shape{1, 2});
  CHECK(r.streams[1].output.shape() == grad::Shape{1, 256});
  CHECK(net.parameter("fusion.W_d").shape() == grad::Shape{256, 256});
  CHECK(net.parameter("rgb.post1.conv.weight").dim(0) == 512);
  CHECK(net.parameter("head.fc0.weight").shape() == grad::Shape{260, 256});
  CHECK(net.parameter("head.fc1.weight").shape() == grad::Shape{256, 16});
  CHECK(net.parameter("head.out.weight").shape() == grad::Shape{16, 2});
}

TEST_CASE("degenerate and malformed inputs") {
  PonNet<double> net(ModelConfig::desk());
  auto batch = random_batch<double>(2, 32, 3);
  batch.rgb = Tensor<double>::constant({2, 3, 32, 32}, 0.0);
  batch.depth = Tensor<double>::constant({2, 3, 32, 32}, 0.0);
  {
    Graph<double> g;
    const auto r = net.forward(g, batch, Mode::train);
    for (double v : r.logits.values()) CHECK(std::isfinite(v));
    for (double v : r.streams[0].features.values()) CHECK(std::isfinite(v));
  }
  auto raw = batch;
  raw.depth = Tensor<double>::constant({2, 1, 32, 32}, 1.0);
  Graph<double> g1;
  CHECK_THROWS_AS(net.forward(g1, raw, Mode::eval), grad::ShapeError);
  auto wrong_side = random_batch<double>(2, 16, 3);
  Graph<double> g2;
  CHECK_THROWS_AS(net.forward(g2, wrong_side, Mode::eval), grad::ShapeError);
  auto bad_h = random_batch<double>(2, 32, 3);
  bad_h.heuristic = Tensor<double>::constant({2, 4}, {0.1, 0.1, 0.0, 1.0, 0.1, 0.1, 0.1, 1.0});
  Graph<double> g3;
  CHECK_THROWS_AS(net.forward(g3, bad_h, Mode::eval), std::invalid_argument);
}

TEST_CASE("variant structure") {
  const auto full = names_of(with_variant(Variant::full));
  const auto type4 = names_of(with_variant(Variant::type4));
  std::set<std::string> diff;
  std::set_difference(full.begin(), full.end(), type4.begin(), type4.end(), std::inserter(diff, diff.end()));
  CHECK(diff == std::set<std::string>{"fusion.W_r", "fusion.b_r", "fusion.W_d", "fusion.b_d", "fusion.V"});
  CHECK(std::includes(full.begin(), full.end(), type4.begin(), type4.end()));

  for (InputMode m : {InputMode::rgb, InputMode::depth, InputMode::rgbd}) {
    const auto type2 = names_of(with_variant(Variant::type2, m));
    CHECK(std::none_of(type2.begin(), type2.end(),
                       [](const std::string& n) { return n.find(".att.") != std::string::npos; }));
    const auto type1 = names_of(with_variant(Variant::type1, m));
    CHECK(type1.size() > type2.size());
    CHECK(std::includes(type1.begin(), type1.end(), type2.begin(), type2.end()));
    const auto type3 = names_of(with_variant(Variant::type3, m));
    CHECK(std::any_of(type3.begin(), type3.end(),
                      [](const std::string& n) { return n.find(".att.") != std::string::npos; }));
  }

  PonNet<double> early(with_variant(Variant::type3, InputMode::rgbd));
  CHECK(early.parameter("rgbd.pre0.conv.weight").dim(1) == 6);
  Graph<double> g;
  const auto r = early.forward(g, random_batch<double>(2, 32, 4), Mode::train);
  CHECK(r.streams.size() == 1);
  CHECK(r.streams[0].features.shape() == grad::Shape{2, 32, 8, 8});
  CHECK(r.fused.shape() == grad::Shape{2, 32});

  PonNet<double> concat(with_variant(Variant::type4));
  CHECK(concat.parameter("head.fc0.weight").shape() == grad::Shape{68, 32});

  PonNet<double> depth_only(with_variant(Variant::type2, InputMode::depth));
  Graph<double> g2;
  const auto r2 = depth_only.forward(g2, random_batch<double>(2, 32, 5), Mode::train);
  CHECK(r2.streams[0].name == "depth");
  CHECK_FALSE(r2.streams[0].attention.defined());
}

TEST_CASE("attention modulation identities") {
  const auto f = fixture::constant<double>({2, 3, 4, 4}, oracle::random_values(96, 11));
  Graph<double> g;
  const auto zero = grad::attention_modulate(g, f, Tensor<double>::constant({2, 1, 4, 4}, 0.0));
  CHECK(vec(zero) == vec(f));
  const auto one = grad::attention_modulate(g, f, Tensor<double>::constant({2, 1, 4, 4}, 1.0));
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(one[i] == 2.0 * f[i]);

  const auto a = oracle::random_values(32, 12, 0.0, 1.0);
  const auto w = grad::attention_modulate(g, f, fixture::constant<double>({2, 1, 4, 4}, a));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t q = 0; q < 16; ++q) {
        const double expect = (1.0 + a[n * 16 + q]) * f[(n * 3 + c) * 16 + q];
        CHECK(std::abs(w[(n * 3 + c) * 16 + q] - expect) <= 1e-12);
      }

  // Monotone in a for non-negative features.
  const auto fpos = fixture::constant<double>({1, 2, 3, 3}, oracle::random_values(18, 13, 0.0, 2.0));
  auto lo = oracle::random_values(9, 14, 0.0, 0.5);
  auto hi = lo;
  for (double& v : hi) v += 0.3;
  const auto wl = grad::attention_modulate(g, fpos, fixture::constant<double>({1, 1, 3, 3}, lo));
  const auto wh = grad::attention_modulate(g, fpos, fixture::constant<double>({1, 1, 3, 3}, hi));
  for (std::size_t i = 0; i < wl.size(); ++i) CHECK(std::abs(wh[i]) >= std::abs(wl[i]));

  CHECK_THROWS_AS(grad::attention_modulate(g, f, Tensor<double>::constant({2, 1, 3, 4}, 0.0)), grad::ShapeError);
}

TEST_CASE("fusion weights") {
  // Softmax shift invariance of (e_r, e_d).
  const auto e = oracle::random_values(20, 21, -3, 3);
  Graph<double> g;
  const auto a = grad::softmax_rows(g, fixture::constant<double>({10, 2}, e));
  auto shifted = e;
  for (double& v : shifted) v += 17.25;
  const auto b = grad::softmax_rows(g, fixture::constant<double>({10, 2}, shifted));
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);

  // Random forwards: alpha in (0, 1) and normalized.
  PonNet<double> net(ModelConfig::desk());
  Graph<double> g2;
  const auto r = net.forward(g2, random_batch<double>(8, 32, 22), Mode::train);
  for (const auto& o : net.outputs(r)) {
    CHECK(o.alpha_r > 0.0);
    CHECK(o.alpha_d > 0.0);
    CHECK(std::abs(o.alpha_r + o.alpha_d - 1.0) <= 1e-12);
  }
}

TEST_CASE("identical streams fuse symmetrically") {
  PonNet<double> net(ModelConfig::desk());
  // Copy every rgb.* parameter onto depth.* and the r fusion weights onto d.
  const auto& names = net.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string src;
    if (names[i].rfind("depth.", 0) == 0) src = "rgb." + names[i].substr(6);
    if (names[i] == "fusion.W_d") src = "fusion.W_r";
    if (names[i] == "fusion.b_d") src = "fusion.b_r";
    if (src.empty()) continue;
    const auto v = net.parameter(src).values();
    std::copy(v.begin(), v.end(), net.parameters()[i].mutable_values().begin());
  }
  auto batch = random_batch<double>(4, 32, 31);
  batch.depth = batch.rgb;
  Graph<double> g;
  const auto r = net.forward(g, batch, Mode::train);
  for (const auto& o : net.outputs(r)) {
    CHECK(o.alpha_r == 0.5);
    CHECK(o.alpha_d == 0.5);
  }
  const auto o_r = r.streams[0].output.values();
  for (std::size_t i = 0; i < r.fused.size(); ++i) CHECK(std::abs(r.fused[i] - o_r[i]) <= 1e-12);
}

TEST_CASE("forward output invariants") {
  PonNet<double> net(ModelConfig::desk());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Graph<double> g;
    const auto r = net.forward(g, random_batch<double>(10, 32, 100 + seed), Mode::train);
    for (const auto& o : net.outputs(r)) {
      REQUIRE(o.p.size() == 1);
      CHECK(std::abs(o.p[0][0] + o.p[0][1] - 1.0) <= 1e-10);
      CHECK(o.a_r.size() == 64);
      CHECK(o.a_d.size() == 64);
      for (double v : o.a_r) CHECK((v >= 0.0 && v <= 1.0));
      for (double v : o.a_d) CHECK((v >= 0.0 && v <= 1.0));
      CHECK(std::abs(o.alpha_r + o.alpha_d - 1.0) <= 1e-12);
      CHECK(o.m.size() == 32);
    }
  }
}

TEST_CASE("eval forward is deterministic") {
  PonNet<float> net(ModelConfig::desk());
  const auto batch = random_batch<float>(5, 32, 41);
  {
    Graph<float> g;
    net.forward(g, batch, Mode::train);  // move running stats off their defaults
  }
  Graph<float> g1, g2;
  const auto a = net.forward(g1, batch, Mode::eval);
  const auto b = net.forward(g2, batch, Mode::eval);
  CHECK(vec(a.logits) == vec(b.logits));
  CHECK(vec(a.streams[1].attention) == vec(b.streams[1].attention));
  PonNet<float> twin(ModelConfig::desk());
  CHECK(vec(twin.parameters()[3]) == vec(PonNet<float>(ModelConfig::desk()).parameters()[3]));
}

TEST_CASE("decision ties go to DC") {
  CHECK(decide(0.5, 0.5) == kDC);
  CHECK(decide(0.4, 0.6) == kNDC);
  CHECK(decide(0.6, 0.4) == kDC);
}

TEST_CASE("loss identities") {
  ModelConfig c = ModelConfig::desk();
  c.lambda_p = 0.0;
  PonNet<double> net(c);
  const std::size_t n = 6;
  Graph<double> g;
  const auto r = net.forward(g, random_batch<double>(n, 32, 51), Mode::train);
  const auto labels = random_labels(n, 1, 52);
  const auto y = grad::one_hot<double>(labels[0], 2);
  const std::vector<double> onehot(y.values().begin(), y.values().end());

  const double total = net.total_loss(g, r, labels, grad::Reduction::sum).item();
  const double j_r = oracle::cross_entropy(vec(r.streams[0].branch_logits), onehot, n, 2);
  const double j_d = oracle::cross_entropy(vec(r.streams[1].branch_logits), onehot, n, 2);
  const double j_p = oracle::cross_entropy(vec(r.logits), onehot, n, 2);
  const double gr = grad::softmax_cross_entropy(g, r.streams[0].branch_logits, y).item();
  const double gd = grad::softmax_cross_entropy(g, r.streams[1].branch_logits, y).item();
  CHECK(total == gr + gd);  // lambda_p = 0 drops J_p exactly
  CHECK(std::abs(gr - j_r) <= 1e-10);
  CHECK(std::abs(gd - j_d) <= 1e-10);

  PonNet<double> weighted(ModelConfig::desk());
  Graph<double> g2;
  const auto r2 = weighted.forward(g2, random_batch<double>(n, 32, 51), Mode::train);
  const double t2 = weighted.total_loss(g2, r2, labels, grad::Reduction::sum).item();
  const double o_r = oracle::cross_entropy(vec(r2.streams[0].branch_logits), onehot, n, 2);
  const double o_d = oracle::cross_entropy(vec(r2.streams[1].branch_logits), onehot, n, 2);
  const double o_p = oracle::cross_entropy(vec(r2.logits), onehot, n, 2);
  CHECK(std::abs(t2 - (o_r + o_d + 0.3 * o_p)) <= 1e-10);
  const double mean = weighted.total_loss(g2, r2, labels, grad::Reduction::mean).item();
  CHECK(std::abs(mean - t2 / n) <= 1e-12);
  (void)j_p;

  // Saturated, correct predictors give a vanishing loss.
  ForwardResult<double> sat;
  const auto confident = Tensor<double>::constant({2, 2}, {40.0, -40.0, -40.0, 40.0});
  sat.streams.resize(2);
  sat.streams[0].name = "rgb";
  sat.streams[1].name = "depth";
  sat.streams[0].branch_logits = confident;
  sat.streams[1].branch_logits = confident;
  sat.logits = confident;
  Graph<double> g3;
  CHECK(weighted.total_loss(g3, sat, {{kDC, kNDC}}, grad::Reduction::sum).item() < 1e-9);
  CHECK_THROWS_AS(weighted.total_loss(g3, sat, {{kDC, kNDC}, {kDC, kDC}}), std::invalid_argument);
  CHECK_THROWS_AS(weighted.total_loss(g3, sat, {{kDC}}), std::invalid_argument);
}

TEST_CASE("multi-head loss is the weighted sum over heads") {
  ModelConfig c = ModelConfig::desk();
  c.heads = 5;
  c.head_loss_weights = {1.0, 0.5, 2.0, 0.0, 1.5};
  PonNet<double> net(c);
  const std::size_t n = 4;
  Graph<double> g;
  const auto r = net.forward(g, random_batch<double>(n, 32, 61), Mode::train);
  CHECK(r.logits.shape() == grad::Shape{n, 10});
  CHECK(r.streams[0].branch_logits.shape() == grad::Shape{n, 10});
  const auto labels = random_labels(n, 5, 62);
  double expect = 0.0;
  for (const auto& [logits, lambda] : {std::pair{r.streams[0].branch_logits, 1.0},
                                       std::pair{r.streams[1].branch_logits, 1.0}, std::pair{r.logits, 0.3}}) {
    for (int h = 0; h < 5; ++h) {
      std::vector<double> slice, onehot;
      for (std::size_t i = 0; i < n; ++i) {
        slice.push_back(logits[i * 10 + 2 * h]);
        slice.push_back(logits[i * 10 + 2 * h + 1]);
        onehot.push_back(labels[h][i] == kDC ? 1.0 : 0.0);
        onehot.push_back(labels[h][i] == kNDC ? 1.0 : 0.0);
      }
      expect += lambda * c.head_loss_weights[h] * oracle::cross_entropy(slice, onehot, n, 2);
    }
  }
  CHECK(std::abs(net.total_loss(g, r, labels, grad::Reduction::sum).item() - expect) <= 1e-10);
  const auto outs = net.outputs(r);
  CHECK(outs[0].p.size() == 5);
  CHECK(outs[0].branch_d.size() == 5);
}

TEST_CASE("first head is unaffected by extra zero-weight heads") {
  ModelConfig one = ModelConfig::desk();
  ModelConfig five = one;
  five.heads = 5;
  five.head_loss_weights = {1, 0, 0, 0, 0};
  PonNet<float> a(one), b(five);
  grad::Adam<float> oa, ob;
  const auto batch = random_batch<float>(12, 32, 71);
  auto labels5 = random_labels(12, 5, 72);
  const HeadLabels labels1{labels5[0]};
  for (int step = 0; step < 4; ++step) {
    Graph<float> ga, gb;
    const auto ra = a.forward(ga, batch, Mode::train);
    const auto rb = b.forward(gb, batch, Mode::train);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(ra.logits[2 * i] == rb.logits[10 * i]);
      CHECK(ra.logits[2 * i + 1] == rb.logits[10 * i + 1]);
      CHECK(ra.streams[0].branch_logits[2 * i] == rb.streams[0].branch_logits[10 * i]);
    }
    const auto la = a.total_loss(ga, ra, labels1);
    const auto lb = b.total_loss(gb, rb, labels5);
    CHECK(la.item() == lb.item());
    a.zero_grad();
    b.zero_grad();
    ga.backward(la);
    gb.backward(lb);
    oa.step(a.parameters());
    ob.step(b.parameters());
  }
}

TEST_CASE("micro configuration matches finite differences") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto report = fixture::check_model(ModelConfig::micro(), seed);
    INFO(report.worst);
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked > 1000);
  }
}

TEST_CASE("Adam reduces the loss on a fixed batch") {
  PonNet<float> net(ModelConfig::desk());
  grad::Adam<float> adam;
  const auto batch = random_batch<float>(48, 32, 81);
  const auto labels = random_labels(48, 1, 82);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    Graph<float> g;
    const auto r = net.forward(g, batch, Mode::train);
    const auto loss = net.total_loss(g, r, labels);
    if (step == 0) first = loss.item();
    last = loss.item();
    net.zero_grad();
    g.backward(loss);
    adam.step(net.parameters());
  }
  MESSAGE("loss " << first << " -> " << last);
  CHECK(last < 0.5 * first);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig c = with_variant(Variant::type3, InputMode::rgbd);
  c.seed = 5;
  PonNet<float> net(c);
  const auto batch = random_batch<float>(6, 32, 91);
  {
    Graph<float> g;
    net.forward(g, batch, Mode::train);
  }
  const auto path = std::filesystem::temp_directory_path() / "ponnet_model_ck.bin";
  net.save(path);
  auto loaded = PonNet<float>::load(path);
  CHECK(loaded.config() == c);
  Graph<float> g1, g2;
  CHECK(vec(net.forward(g1, batch, Mode::eval).logits) == vec(loaded.forward(g2, batch, Mode::eval).logits));

  auto blobs = net.state();
  for (auto& b : blobs)
    if (b.name == "rgbd.post.fc.weight") b.shape = {1, b.values.size()};
  PonNet<float> other(c);
  CHECK_THROWS_AS(other.load_state(blobs), grad::CheckpointError);
  std::filesystem::remove(path);
}
