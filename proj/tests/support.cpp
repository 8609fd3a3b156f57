#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blend::testing {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values())
        v = u(rng);
    return t;
}

Var project(Graph& g, Var x, std::uint64_t seed)
{
    Rng rng(seed);
    return ops::weighted_sum(g, x, random_tensor(g.value(x).shape(), rng));
}

namespace {

double evaluate(const ParamSet& ps, const Tensor& input, const LossBuilder& loss)
{
    Graph g;
    Scope s{&g, &ps, {}};
    return g.value(loss(s, g.constant(input)))[0];
}

} // namespace

GradCheck check_gradients(ParamSet& ps, const Tensor& input, const LossBuilder& loss, double eps,
                          std::size_t max_per_tensor, std::uint64_t seed)
{
    Graph g;
    Scope s{&g, &ps, {}};
    Var x = g.leaf(input);
    g.backward(loss(s, x));
    GradMap analytic;
    g.collect_grads(ps, analytic);
    const Tensor dx = g.grad(x);

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::size_t count = 0;
    double td = 0.0, ta = 0.0, tn = 0.0; // per-tensor sums
    GradCheck out;
    auto accumulate = [&](double a, double n) {
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
        td += (a - n) * (a - n);
        ta += a * a;
        tn += n * n;
        ++count;
    };
    auto close_tensor = [&](const std::string& name) {
        const double e = std::sqrt(td) / std::max({std::sqrt(ta), std::sqrt(tn), 1e-300});
        if (e > out.worst_error) {
            out.worst_error = e;
            out.worst = name;
        }
        td = ta = tn = 0.0;
    };

    Tensor xin = input;
    for (std::size_t i = 0; i < xin.size(); ++i) {
        const double keep = xin[i];
        xin[i] = keep + eps;
        const double up = evaluate(ps, xin, loss);
        xin[i] = keep - eps;
        const double down = evaluate(ps, xin, loss);
        xin[i] = keep;
        accumulate(dx[i], (up - down) / (2 * eps));
    }
    close_tensor("input");

    Rng rng(seed);
    for (const auto& name : ps.names()) {
        Tensor& w = ps.get_mut(name);
        std::vector<std::size_t> idx(w.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (max_per_tensor && idx.size() > max_per_tensor) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_per_tensor);
        }
        const auto it = analytic.find(name);
        for (std::size_t i : idx) {
            const double keep = w[i];
            w[i] = keep + eps;
            const double up = evaluate(ps, input, loss);
            w[i] = keep - eps;
            const double down = evaluate(ps, input, loss);
            w[i] = keep;
            accumulate(it == analytic.end() ? 0.0 : it->second[i], (up - down) / (2 * eps));
        }
        close_tensor(name);
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    out.rel_error = std::sqrt(diff2) / scale;
    out.coordinates = count;
    return out;
}

double psnr_bruteforce(const Tensor& a, const Tensor& b)
{
    long double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        se += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
    const long double mse = se / a.size();
    return static_cast<double>(10.0L * std::log10(1.0L / mse));
}

double ssim_bruteforce(const Tensor& a, const Tensor& b)
{
    constexpr int R = 5;
    constexpr double sigma = 1.5;
    double w[2 * R + 1][2 * R + 1];
    double total = 0;
    for (int i = -R; i <= R; ++i)
        for (int j = -R; j <= R; ++j)
            total += (w[i + R][j + R] = std::exp(-(i * i + j * j) / (2 * sigma * sigma)));
    for (auto& row : w)
        for (double& v : row)
            v /= total;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int h = a.height(), wd = a.width();
    double acc = 0;
    long n = 0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = R; y < h - R; ++y)
            for (int x = R; x < wd - R; ++x) {
                double ma = 0, mb = 0;
                for (int i = -R; i <= R; ++i)
                    for (int j = -R; j <= R; ++j) {
                        ma += w[i + R][j + R] * a.at(c, y + i, x + j);
                        mb += w[i + R][j + R] * b.at(c, y + i, x + j);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = -R; i <= R; ++i)
                    for (int j = -R; j <= R; ++j) {
                        const double da = a.at(c, y + i, x + j) - ma, db = b.at(c, y + i, x + j) - mb;
                        va += w[i + R][j + R] * da * da;
                        vb += w[i + R][j + R] * db * db;
                        cov += w[i + R][j + R] * da * db;
                    }
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++n;
            }
    return acc / n;
}

} // namespace blend::testing
