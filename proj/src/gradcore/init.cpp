#include "ponnet/gradcore/init.hpp"

#include <cmath>

#include "ponnet/common/rng.hpp"

namespace ponnet::grad {
namespace {

template <typename T>
void fill_uniform(std::span<T> values, double bound, std::uint64_t seed) {
  Rng rng(seed);
  for (T& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

template <typename T>
void he_uniform(std::span<T> values, std::size_t fan_in, std::uint64_t seed) {
  fill_uniform(values, std::sqrt(6.0 / static_cast<double>(fan_in)), seed);
}

template <typename T>
void lecun_uniform(std::span<T> values, std::size_t fan_in, std::uint64_t seed) {
  fill_uniform(values, std::sqrt(1.0 / static_cast<double>(fan_in)), seed);
}

template void he_uniform(std::span<float>, std::size_t, std::uint64_t);
template void he_uniform(std::span<double>, std::size_t, std::uint64_t);
template void lecun_uniform(std::span<float>, std::size_t, std::uint64_t);
template void lecun_uniform(std::span<double>, std::size_t, std::uint64_t);

}  // namespace ponnet::grad
