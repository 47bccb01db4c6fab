#include "ponnet/harness/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <thread>

namespace ponnet::harness {

std::size_t Confusion::total() const { return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1]; }

double Confusion::accuracy() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(cells[0][0] + cells[1][1]) / static_cast<double>(n);
}

nlohmann::json Confusion::to_json() const {
  return {{"DC", {{"DC", cells[0][0]}, {"NDC", cells[0][1]}}},
          {"NDC", {{"DC", cells[1][0]}, {"NDC", cells[1][1]}}},
          {"accuracy", accuracy()}};
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json out = {{"samples", samples}, {"heads", nlohmann::json::array()}};
  for (std::size_t h = 0; h < heads.size(); ++h) {
    nlohmann::json j = {{"label", heads.size() == 1 ? "Any" : sim::kLabelNames[h]},
                        {"total", heads[h].total.to_json()}};
    if (heads[h].has_rgb) j["rgb_attention"] = heads[h].rgb.to_json();
    if (heads[h].has_depth) j["depth_attention"] = heads[h].depth.to_json();
    out["heads"].push_back(j);
  }
  out["accuracy"] = heads.empty() ? 0.0 : accuracy(0);
  return out;
}

namespace {

constexpr std::size_t kChunk = 64;

template <typename T>
void evaluate_chunk(model::PonNet<T>& net, const Dataset& data, const std::vector<std::size_t>& idx,
                    Metrics& out) {
  grad::Graph<T> g;
  const auto result = net.forward(g, make_batch<T>(data, idx), grad::Mode::eval);
  const auto outputs = net.outputs(result);
  const int heads = net.config().heads;
  const auto labels = head_labels(data, idx, heads);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& o = outputs[i];
    for (int h = 0; h < heads; ++h) {
      auto& hm = out.heads[h];
      const int truth = labels[h][i];
      hm.total.add(truth, model::decide(o.p[h][0], o.p[h][1]));
      if (!o.branch_r.empty()) hm.rgb.add(truth, model::decide(o.branch_r[h][0], o.branch_r[h][1]));
      if (!o.branch_d.empty()) hm.depth.add(truth, model::decide(o.branch_d[h][0], o.branch_d[h][1]));
    }
  }
  out.samples += idx.size();
}

}  // namespace

template <typename T>
Metrics evaluate(model::PonNet<T>& net, const Dataset& data, const std::vector<std::size_t>& indices,
                 unsigned threads) {
  const int heads = net.config().heads;
  bool has_rgb = false, has_depth = false;
  {
    // Branch presence from the architecture.
    for (const auto& name : net.parameter_names()) {
      if (name.find(".att.class_conv.weight") == std::string::npos) continue;
      if (name.rfind("depth.", 0) == 0) has_depth = true;
      else has_rgb = true;
    }
  }
  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t b = 0; b < indices.size(); b += kChunk)
    chunks.emplace_back(indices.begin() + b, indices.begin() + std::min(indices.size(), b + kChunk));

  Metrics blank;
  blank.heads.resize(static_cast<std::size_t>(heads));
  for (auto& h : blank.heads) {
    h.has_rgb = has_rgb;
    h.has_depth = has_depth;
  }
  std::vector<Metrics> parts(chunks.size(), blank);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks.size())));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks.size(); ++c) evaluate_chunk(net, data, chunks[c], parts[c]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks.size(); c += workers) evaluate_chunk(net, data, chunks[c], parts[c]);
      });
    }
    for (auto& t : pool) t.join();
  }
  Metrics out = blank;
  for (const auto& p : parts) {
    out.samples += p.samples;
    for (std::size_t h = 0; h < out.heads.size(); ++h) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          out.heads[h].total.cells[a][b] += p.heads[h].total.cells[a][b];
          out.heads[h].rgb.cells[a][b] += p.heads[h].rgb.cells[a][b];
          out.heads[h].depth.cells[a][b] += p.heads[h].depth.cells[a][b];
        }
      }
    }
  }
  return out;
}

template Metrics evaluate<float>(model::PonNet<float>&, const Dataset&, const std::vector<std::size_t>&, unsigned);
template Metrics evaluate<double>(model::PonNet<double>&, const Dataset&, const std::vector<std::size_t>&, unsigned);

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string confusion_table(const Metrics& m, std::size_t head) {
  const HeadMetrics& h = m.heads.at(head);
  auto cell = [](bool present, std::size_t v) { return present ? std::to_string(v) : std::string("-"); };
  char line[160];
  std::ostringstream os;
  std::snprintf(line, sizeof line, "%-8s | %-13s | %-13s | %-13s\n", "y \\ y^", "Total", "RGB Att.", "Depth Att.");
  os << line;
  std::snprintf(line, sizeof line, "%-8s | %6s %6s | %6s %6s | %6s %6s\n", "", "DC", "NDC", "DC", "NDC", "DC", "NDC");
  os << line << std::string(56, '-') << '\n';
  for (int t = 0; t < 2; ++t) {
    std::snprintf(line, sizeof line, "%-8s | %6s %6s | %6s %6s | %6s %6s\n", t == 0 ? "DC" : "NDC",
                  cell(true, h.total.cells[t][0]).c_str(), cell(true, h.total.cells[t][1]).c_str(),
                  cell(h.has_rgb, h.rgb.cells[t][0]).c_str(), cell(h.has_rgb, h.rgb.cells[t][1]).c_str(),
                  cell(h.has_depth, h.depth.cells[t][0]).c_str(), cell(h.has_depth, h.depth.cells[t][1]).c_str());
    os << line;
  }
  os << std::string(56, '-') << '\n';
  auto acc = [](bool present, const Confusion& c) { return present ? fixed(100.0 * c.accuracy(), 2) : "-"; };
  std::snprintf(line, sizeof line, "%-8s | %13s | %13s | %13s\n", "Acc. [%]", acc(true, h.total).c_str(),
                acc(h.has_rgb, h.rgb).c_str(), acc(h.has_depth, h.depth).c_str());
  os << line;
  return os.str();
}

}  // namespace ponnet::harness
