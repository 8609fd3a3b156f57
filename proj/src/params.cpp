#include "blend/params.hpp"

#include "blend/error.hpp"

#include <cmath>
#include <cstring>

namespace blend {

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

Tensor& ParamSet::add(const std::string& name, Tensor value)
{
    auto [it, inserted] = params_.emplace(name, std::move(value));
    require(inserted, ErrorKind::invalid_parameter, "duplicate parameter name " + name);
    return it->second;
}

const Tensor& ParamSet::get(const std::string& name) const
{
    auto it = params_.find(name);
    require(it != params_.end(), ErrorKind::invalid_checkpoint, "missing parameter " + name);
    return it->second;
}

Tensor& ParamSet::get_mut(const std::string& name)
{
    auto it = params_.find(name);
    require(it != params_.end(), ErrorKind::invalid_checkpoint, "missing parameter " + name);
    return it->second;
}

void ParamSet::set(const std::string& name, Tensor value) { params_[name] = std::move(value); }

std::vector<std::string> ParamSet::names() const
{
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_)
        out.push_back(k);
    return out;
}

std::vector<std::string> ParamSet::names_with_prefix(const std::string& prefix) const
{
    std::vector<std::string> out;
    for (auto it = params_.lower_bound(prefix); it != params_.end() && starts_with(it->first, prefix); ++it)
        out.push_back(it->first);
    return out;
}

std::size_t ParamSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& [k, v] : params_)
        n += v.size();
    return n;
}

void ParamSet::copy_prefix(const ParamSet& src, const std::string& prefix)
{
    for (const auto& name : src.names_with_prefix(prefix))
        set(name, src.get(name));
}

void init_conv(ParamSet& ps, Rng& rng, const std::string& name, int out_c, int in_c, int k, double gain)
{
    Tensor w({out_c, in_c, k, k});
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / (in_c * k * k)));
    for (auto& v : w.values())
        v = dist(rng);
    ps.add(name + ".w", std::move(w));
    ps.add(name + ".b", Tensor({out_c}));
}

void init_linear(ParamSet& ps, Rng& rng, const std::string& name, int out_f, int in_f, double gain)
{
    Tensor w({out_f, in_f});
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(1.0 / in_f));
    for (auto& v : w.values())
        v = dist(rng);
    ps.add(name + ".w", std::move(w));
    ps.add(name + ".b", Tensor({out_f}));
}

void zero_params(ParamSet& ps, const std::string& prefix)
{
    for (const auto& name : ps.names_with_prefix(prefix))
        ps.get_mut(name).fill(0.0);
}

std::uint64_t parameter_hash(const ParamSet& ps, const std::function<bool(const std::string&)>& select)
{
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, t] : ps) {
        if (select && !select(name))
            continue;
        mix(name.data(), name.size());
        for (int d : t.shape())
            mix(&d, sizeof d);
        mix(t.data(), t.size() * sizeof(double));
    }
    return h;
}

void scale_grads(GradMap& grads, double factor)
{
    for (auto& [name, g] : grads)
        for (double& v : g.values())
            v *= factor;
}

} // namespace blend
