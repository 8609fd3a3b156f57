#include "blend/tensor.hpp"

#include "blend/error.hpp"

#include <algorithm>
#include <cmath>

namespace blend {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid parameter";
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::invalid_checkpoint: return "invalid checkpoint";
    case ErrorKind::partition: return "partition error";
    case ErrorKind::access_violation: return "access violation";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::io: return "io error";
    case ErrorKind::invariant: return "invariant violation";
    }
    return "error";
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape))
{
    std::size_t n = 1;
    for (int d : shape_) {
        require(d > 0, ErrorKind::shape, "non-positive dimension in " + shape_string(shape_));
        n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, fill);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const std::vector<int>& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    require(a.same_shape(b), ErrorKind::shape,
            "max_abs_diff " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t)
{
    return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

} // namespace blend
