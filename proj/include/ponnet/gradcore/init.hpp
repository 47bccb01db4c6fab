#pragma once

#include <cstdint>
#include <span>

namespace ponnet::grad {

/// Uniform He-style fan-in initialization, U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
void he_uniform(std::span<T> values, std::size_t fan_in, std::uint64_t seed);

/// Uniform U(-b, b) with b = sqrt(1 / fan_in), for layers not followed by relu.
template <typename T>
void lecun_uniform(std::span<T> values, std::size_t fan_in, std::uint64_t seed);

}  // namespace ponnet::grad
