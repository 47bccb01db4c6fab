#include "ponnet/gradcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace ponnet::grad {
namespace {

constexpr char kMagic[8] = {'P', 'O', 'N', 'N', 'E', 'T', 'C', 'K'};

template <typename U>
void put(std::vector<char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedBlob>& blobs) {
  std::vector<char> out(kMagic, kMagic + sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blobs.size()));
  std::set<std::string> seen;
  for (const auto& blob : blobs) {
    if (!seen.insert(blob.name).second) {
      throw CheckpointError("duplicate checkpoint entry '" + blob.name + "'");
    }
    if (shape_size(blob.shape) != blob.values.size()) {
      throw CheckpointError("entry '" + blob.name + "' has inconsistent shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.name.size()));
    out.insert(out.end(), blob.name.begin(), blob.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.shape.size()));
    for (const auto extent : blob.shape) put<std::uint64_t>(out, extent);
    for (const double v : blob.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError(path.string() + ": write failed");
}

std::vector<NamedBlob> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(path.string() + ": cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(std::move(bytes), path.string());
  if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedBlob> blobs;
  blobs.reserve(count);
  for (std::uint32_t b = 0; b < count; ++b) {
    NamedBlob blob;
    blob.name = in.str(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    for (std::uint32_t r = 0; r < rank; ++r) blob.shape.push_back(in.get<std::uint64_t>());
    const auto n = shape_size(blob.shape);
    blob.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) blob.values[i] = std::bit_cast<double>(in.get<std::uint64_t>());
    blobs.push_back(std::move(blob));
  }
  if (!in.done()) throw CheckpointError(path.string() + ": trailing bytes after last entry");
  return blobs;
}

}  // namespace ponnet::grad
