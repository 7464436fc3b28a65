#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace odevae::ad {

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major tensor of doubles, rank 0 (scalar), 1 or 2.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
        if (static_cast<std::size_t>(shape_size(shape_)) != v_.size())
            throw TensorError("Tensor: shape does not match number of values");
        for (double x : v_)
            if (!std::isfinite(x)) throw TensorError("Tensor: non-finite value");
    }

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.v_.assign(static_cast<std::size_t>(shape_size(t.shape_)), 0.0);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor vector(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor({n}, std::move(v));
    }
    static Tensor matrix(int rows, int cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int size() const { return static_cast<int>(v_.size()); }
    bool is_scalar() const { return shape_.empty(); }

    int rows() const { return shape_.empty() ? 1 : shape_[0]; }
    int cols() const {
        if (shape_.size() < 2) return shape_.empty() ? 1 : 1;
        return shape_[1];
    }

    double item() const {
        if (v_.size() != 1) throw TensorError("Tensor::item on non-scalar");
        return v_[0];
    }

    double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r * cols() + c)]; }
    double& at(int r, int c) { return v_[static_cast<std::size_t>(r * cols() + c)]; }

    std::span<const double> data() const { return v_; }
    std::span<double> data() { return v_; }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }

    static long shape_size(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d < 0) throw TensorError("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<double> v_;
};

}  // namespace odevae::ad
