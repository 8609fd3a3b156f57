#pragma once

#include "blend/autograd.hpp"
#include "blend/blocks.hpp"
#include "blend/params.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace blend::testing {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Builds a scalar loss from a scope and the (differentiable) input.
using LossBuilder = std::function<Var(const Scope&, Var input)>;

struct GradCheck {
    double rel_error = 0.0;      // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    std::size_t coordinates = 0; // scalars perturbed
    std::string worst;           // tensor ("input" or a parameter) with the largest own relative error
    double worst_error = 0.0;
};

/// Central differences with step eps on the input and on up to
/// `max_per_tensor` randomly chosen coordinates of every parameter tensor.
GradCheck check_gradients(ParamSet& ps, const Tensor& input, const LossBuilder& loss, double eps = 1e-4,
                          std::size_t max_per_tensor = 0, std::uint64_t seed = 1);

/// Projection weights turning a feature map into a scalar loss.
Var project(Graph& g, Var x, std::uint64_t seed);

// Brute-force metric oracles: direct loops, 2-D window, no shared code with
// the library implementation.
double psnr_bruteforce(const Tensor& a, const Tensor& b);
double ssim_bruteforce(const Tensor& a, const Tensor& b);

} // namespace blend::testing
