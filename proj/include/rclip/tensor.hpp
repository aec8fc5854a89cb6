#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "rclip/errors.hpp"

namespace rclip {

// Dense row-major tensor. Contiguous storage only; views are not needed at
// this scale and are deliberately absent.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }
    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ShapeMismatch("tensor data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
Tensor<T> tensor1d(std::initializer_list<T> xs) {
    return Tensor<T>({static_cast<int64_t>(xs.size())}, std::vector<T>(xs));
}

}  // namespace rclip
