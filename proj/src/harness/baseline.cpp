#include "ponnet/harness/baseline.hpp"

#include <thread>

namespace ponnet::harness {

plane::PlacementQuery query_for(const sim::SampleRecord& record, int width, int height) {
  plane::PlacementQuery q;
  q.camera.eye = record.camera_eye;
  q.camera.rotation = record.camera_rotation;
  q.camera.intrinsics = record.intrinsics;
  q.camera.width = width;
  q.camera.height = height;
  q.roi = record.roi;
  q.footprint_width = record.x_h.width;
  q.footprint_length = record.x_h.length;
  q.surface_height = record.surface_height;
  return q;
}

std::vector<int> baseline_predictions(const Dataset& data, const std::vector<std::size_t>& indices,
                                      unsigned threads) {
  std::vector<int> out(indices.size(), model::kDC);
  auto work = [&](std::size_t i) {
    const auto& record = data.samples.at(indices[i]).record;
    const std::filesystem::path path = data.root / record.depth_path;
    DepthImage depth;
    try {
      depth = read_depth_pgm(path);
    } catch (const std::exception& e) {
      throw DatasetError("record " + record.id + ": " + e.what());
    }
    const auto label = plane::predict_from_depth(depth, query_for(record, depth.width, depth.height));
    out[i] = label == sim::Label::DC ? model::kDC : model::kNDC;
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(indices.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < indices.size(); ++i) work(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < indices.size(); i += workers) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Metrics run_baseline(const Dataset& data, const std::vector<std::size_t>& indices, unsigned threads) {
  const auto predicted = baseline_predictions(data, indices, threads);
  Metrics m;
  m.heads.resize(1);
  m.samples = indices.size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int truth = data.samples[indices[i]].record.labels.any() == sim::Label::DC ? model::kDC : model::kNDC;
    m.heads[0].total.add(truth, predicted[i]);
  }
  return m;
}

}  // namespace ponnet::harness
