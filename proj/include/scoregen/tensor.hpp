#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "scoregen/common.hpp"

namespace scoregen {

// Dense row-major tensor of doubles. Shapes used in practice are
// {N,D} for feature rows and {N,C,H,W} for activations.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        require(static_cast<std::size_t>(numel_of(shape)) == v.size(), Errc::ShapeMismatch,
                "tensor data does not match shape");
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    long numel() const { return static_cast<long>(v.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    // {N,C,H,W} accessor
    double& at4(int n, int c, int h, int w) {
        return v[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(int n, int c, int h, int w) const {
        return v[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    // {N,D} accessor
    double& at2(int n, int d) { return v[static_cast<std::size_t>(n) * shape[1] + d]; }
    double at2(int n, int d) const { return v[static_cast<std::size_t>(n) * shape[1] + d]; }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

    std::string shape_str() const {
        std::string s = "{";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "}";
    }
};

}  // namespace scoregen
