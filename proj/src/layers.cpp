#include "protoshift/layers.hpp"

#include <cmath>

namespace protoshift {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Identity: return "identity";
    }
    throw ValueError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "leaky_relu") return Activation::LeakyRelu;
    if (name == "identity") return Activation::Identity;
    throw ValueError("unknown activation name '" + name + "'");
}

Tensor apply_activation(Tape& tape, const Tensor& x, Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return tape.leaky_relu(x, kLeakySlope);
        case Activation::Identity: return x;
    }
    throw ValueError("unknown activation");
}

Tensor glorot_init(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0)
        throw ValueError("glorot_init fans must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    return w;
}

} // namespace protoshift
