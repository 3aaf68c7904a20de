#include "spikelab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace spikelab {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return shape.empty() ? 0 : n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
}

Tensor Tensor::zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::randn(Shape s, Rng& rng, double sd) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& x : t.data) x = rng.normal(0.0, sd);
    return t;
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape));
    return shape[i];
}

double Tensor::item() const {
    if (data.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
}

double& Tensor::at2(std::size_t i, std::size_t j) {
    return data[i * shape.at(1) + j];
}

double Tensor::at2(std::size_t i, std::size_t j) const {
    return data[i * shape.at(1) + j];
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    return std::equal(a.data.begin(), a.data.end(), b.data.begin(),
                      [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& x : out.data) x *= c;
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data) s += x;
    return s;
}

double mean(const Tensor& a) {
    if (a.data.empty()) throw ArgumentError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.data.size());
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double x : a.data) m = std::max(m, std::abs(x));
    return m;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ArgumentError("clamp: lo > hi");
    Tensor out = x;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return out;
}

Tensor soft_threshold(const Tensor& x, double tau) {
    if (tau < 0.0) throw ArgumentError("soft_threshold: tau must be >= 0");
    Tensor out = x;
    for (double& v : out.data) {
        double mag = std::abs(v) - tau;
        v = mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

Tensor normalize_unit(const Tensor& v) {
    double n = norm2(v);
    if (n == 0.0) throw ArgumentError("normalize_unit: zero vector");
    return scale(v, 1.0 / n);
}

}  // namespace spikelab
