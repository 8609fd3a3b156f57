#pragma once

#include "blend/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace blend {

using GradMap = std::map<std::string, Tensor>;
using Rng = std::mt19937_64;

/// Named parameter tensors of a model. Names are path-like
/// ("expert2/block4/sk/branch0.w") and kept sorted so every traversal is
/// deterministic.
class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get_mut(const std::string& name);
    void set(const std::string& name, Tensor value);
    void erase(const std::string& name) { params_.erase(name); }

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }

    /// Copies every parameter whose name starts with `prefix` from `src`.
    void copy_prefix(const ParamSet& src, const std::string& prefix);

private:
    std::map<std::string, Tensor> params_;
};

// Initializers. Conv weights are He-normal scaled by `gain`; biases start at zero.
void init_conv(ParamSet& ps, Rng& rng, const std::string& name, int out_c, int in_c, int k, double gain = 1.0);
void init_linear(ParamSet& ps, Rng& rng, const std::string& name, int out_f, int in_f, double gain = 1.0);
void zero_params(ParamSet& ps, const std::string& prefix);

void scale_grads(GradMap& grads, double factor);

/// FNV-1a over names, shapes and raw bytes of the selected parameters.
std::uint64_t parameter_hash(const ParamSet& ps, const std::function<bool(const std::string&)>& select = {});

bool starts_with(const std::string& s, const std::string& prefix);

} // namespace blend
