#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "spikelab/error.hpp"
#include "spikelab/rng.hpp"

namespace spikelab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Plain value type: copy is deep,
// moves are cheap, and no op mutates its inputs.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor randn(Shape s, Rng& rng, double sd = 1.0);

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool empty() const { return data.empty(); }

    double item() const;  // scalar tensors only
    double& at2(std::size_t i, std::size_t j);
    double at2(std::size_t i, std::size_t j) const;

    bool all_finite() const;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

// Elementwise / reduction helpers on plain tensors (no gradient tracking).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
double sum(const Tensor& a);
double mean(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double max_abs(const Tensor& a);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor soft_threshold(const Tensor& x, double tau);
Tensor normalize_unit(const Tensor& v);

}  // namespace spikelab
