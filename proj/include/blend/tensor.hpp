#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace blend {

/// Dense row-major array of doubles. Feature maps are rank 3 (C, H, W);
/// convolution kernels are rank 4 (Cout, Cin, K, K); vectors are rank 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::initializer_list<int> shape, double fill = 0.0)
        : Tensor(std::vector<int>(shape), fill) {}

    static Tensor like(const Tensor& other, double fill = 0.0) { return Tensor(other.shape_, fill); }

    const std::vector<int>& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // rank-3 helpers
    int channels() const { return dim(0); }
    int height() const { return dim(1); }
    int width() const { return dim(2); }
    std::size_t plane() const { return static_cast<std::size_t>(dim(1)) * static_cast<std::size_t>(dim(2)); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

    double* channel(int c) noexcept { return data_.data() + static_cast<std::size_t>(c) * plane(); }
    const double* channel(int c) const noexcept { return data_.data() + static_cast<std::size_t>(c) * plane(); }

    void fill(double v);
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

private:
    std::size_t index(int c, int y, int x) const noexcept
    {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(y))
                   * static_cast<std::size_t>(shape_[2])
               + static_cast<std::size_t>(x);
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

} // namespace blend
