#pragma once

#include <string>

#include "protoshift/rng.hpp"
#include "protoshift/tensor.hpp"

namespace protoshift {

/// Slope used by every leaky rectifier in the project.
inline constexpr double kLeakySlope = 0.2;

enum class Activation { LeakyRelu, Identity };

/// Stable names used in checkpoint headers ("leaky_relu", "identity").
std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

Tensor apply_activation(Tape& tape, const Tensor& x, Activation a);

/// Glorot uniform weight matrix [fan_in x fan_out]: entries drawn uniformly
/// from +-sqrt(6 / (fan_in + fan_out)), row-major draw order.
Tensor glorot_init(Rng& rng, std::size_t fan_in, std::size_t fan_out);

} // namespace protoshift
