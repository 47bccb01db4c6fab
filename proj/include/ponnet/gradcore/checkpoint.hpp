#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ponnet/gradcore/tensor.hpp"

namespace ponnet::grad {

/// One named array in a checkpoint file. Values are stored as float64.
struct NamedBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const NamedBlob&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout, all integers little-endian:
///   "PONNETCK" | u32 version | u32 blob count
///   per blob: u32 name length | name bytes | u32 rank | u64 extents[rank]
///             | f64 values[prod(extents)]
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedBlob>& blobs);
std::vector<NamedBlob> read_checkpoint(const std::filesystem::path& path);

}  // namespace ponnet::grad
