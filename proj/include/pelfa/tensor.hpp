#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "pelfa/errors.hpp"

namespace pelfa {

// Dense row-major tensor of doubles, rank 1..4. Feature maps are rank 4
// laid out (batch, channels, height, width).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            if (d < 1) throw ContractViolation("Tensor: every dim must be >= 1");
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, fill);
    }

    Tensor(std::initializer_list<int> shape, double fill = 0.0)
        : Tensor(std::vector<int>(shape), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-4 (B, C, H, W)
    double& at(int b, int c, int h, int w) {
        assert(rank() == 4);
        return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(int b, int c, int h, int w) const {
        assert(rank() == 4);
        return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    // rank-2 (rows, cols)
    double& at(int i, int j) {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i) * shape_[1] + j];
    }
    double at(int i, int j) const {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i) * shape_[1] + j];
    }

    double& at(int i) {
        assert(rank() == 1);
        return data_[static_cast<std::size_t>(i)];
    }
    double at(int i) const {
        assert(rank() == 1);
        return data_[static_cast<std::size_t>(i)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline void require_feature_map(const Tensor& t, const char* who) {
    if (t.rank() != 4)
        throw ContractViolation(std::string(who) + ": expected rank-4 feature map, got rank " +
                                std::to_string(t.rank()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw ContractViolation(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

}  // namespace pelfa
