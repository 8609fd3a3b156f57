#pragma once

#include "blend/params.hpp"

#include <functional>
#include <map>
#include <string>

namespace blend {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with per-parameter step counters. Only parameters present in the
/// gradient map move, so a step never touches parameters outside the graph
/// that produced the gradients.
class Adam {
public:
    using LearningRate = std::function<double(const std::string&)>;

    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamSet& params, const GradMap& grads, const LearningRate& lr);
    void step(ParamSet& params, const GradMap& grads, double lr)
    {
        step(params, grads, [lr](const std::string&) { return lr; });
    }

    long long steps() const noexcept { return steps_; }

private:
    struct Moments {
        Tensor m, v;
        long long t = 0;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
    long long steps_ = 0;
};

/// base * (1 + cos(pi * t / period)) / 2 for t in [0, period]; 0 beyond.
double cosine_lr(double base, double t, double period);

struct LearningRates {
    double expanded; // theta_P2
    double shared;   // theta_S and theta_P1
};

/// Partitioned cosine schedule: theta_P2 starts from mu, the rest from rho * mu.
LearningRates lr_schedule(double t, double period, double mu, double rho);

} // namespace blend
