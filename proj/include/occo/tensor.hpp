#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "occo/common.hpp"

namespace occo {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << "(";
    for (size_t i = 0; i < s.size(); ++i) oss << (i ? "," : "") << s[i];
    oss << ")";
    return oss.str();
}

/// Dense row-major double tensor. Copies share storage; use clone() for a
/// deep copy. Values are treated as immutable once they enter an autograd
/// graph; parameters are mutated in place by the optimizer.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {
        for (int64_t d : shape_) OCCO_CHECK(d >= 0, "negative dimension in shape ", shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from(std::vector<double> values, Shape shape) {
        OCCO_CHECK(static_cast<int64_t>(values.size()) == shape_numel(shape),
                   "value count ", values.size(), " does not match shape ", shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
        Tensor t(std::move(shape));
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& v : t.data()) v = dist(rng);
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    int64_t size(int64_t i) const {
        if (i < 0) i += ndim();
        OCCO_CHECK(i >= 0 && i < ndim(), "dim index ", i, " out of range for ", shape_str(shape_));
        return shape_[static_cast<size_t>(i)];
    }

    std::vector<double>& data() { return *data_; }
    const std::vector<double>& data() const { return *data_; }
    double* ptr() { return data_->data(); }
    const double* ptr() const { return data_->data(); }

    double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    double& at(int64_t i, int64_t j) { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }

    double& at(int64_t i, int64_t j, int64_t k) {
        return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return (*data_)[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return (*data_)[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    /// Scalar value of a one-element tensor.
    double item() const {
        OCCO_CHECK(numel() == 1, "item() on tensor of shape ", shape_str(shape_));
        return (*data_)[0];
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<double>>(*data_);
        return t;
    }

    /// Same storage, new shape (numel must match).
    Tensor reshaped(Shape shape) const {
        OCCO_CHECK(shape_numel(shape) == numel(), "reshape ", shape_str(shape_), " -> ",
                   shape_str(shape), " changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(double v) { std::fill(data_->begin(), data_->end(), v); }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double sum() const { return std::accumulate(data_->begin(), data_->end(), 0.0); }

    double abs_max() const {
        double m = 0.0;
        for (double v : *data_) m = std::max(m, std::fabs(v));
        return m;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    OCCO_CHECK(a.same_shape(b), "max_abs_diff shape mismatch ", shape_str(a.shape()), " vs ",
               shape_str(b.shape()));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace occo
