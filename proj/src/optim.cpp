#include "blend/optim.hpp"

#include "blend/error.hpp"

#include <cmath>
#include <numbers>

namespace blend {

void Adam::step(ParamSet& params, const GradMap& grads, const LearningRate& lr)
{
    ++steps_;
    for (const auto& [name, g] : grads) {
        Tensor& p = params.get_mut(name);
        require(p.same_shape(g), ErrorKind::shape, "gradient shape mismatch for " + name);
        Moments& st = state_[name];
        if (st.m.empty()) {
            st.m = Tensor::like(p);
            st.v = Tensor::like(p);
        }
        ++st.t;
        const double rate = lr(name);
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < p.size(); ++i) {
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            if (rate != 0.0)
                p[i] -= rate * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg_.eps);
        }
    }
}

double cosine_lr(double base, double t, double period)
{
    require(period > 0.0, ErrorKind::invalid_parameter, "cosine period must be positive");
    if (t <= 0.0)
        return base;
    if (t >= period)
        return 0.0;
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t / period));
}

LearningRates lr_schedule(double t, double period, double mu, double rho)
{
    require(rho >= 0.0 && rho <= 1.0, ErrorKind::invalid_parameter, "rho must lie in [0, 1]");
    const double f = cosine_lr(1.0, t, period);
    return {mu * f, rho * mu * f};
}

} // namespace blend
