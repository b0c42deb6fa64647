#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soundedit/common.hpp"

namespace soundedit {

using Shape = std::vector<int>;

/// Dense row-major double tensor. 2-D shapes {rows, cols} are the working
/// currency of the autodiff tape; images/latents use {h, w, c} and reshape
/// to {h*w, c} at the tape boundary.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor randn(Shape s, RandomStream& rng, double stddev = 1.0);
    static Tensor from_values(Shape s, std::vector<double> values);

    int64_t size() const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;

    bool is_matrix() const { return shape.size() == 2; }
    int rows() const;
    int cols() const;

    double& at(int r, int c);
    double at(int r, int c) const;
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    Tensor reshaped(Shape s) const;

    double max_abs() const;
    double sum() const;
    bool all_finite() const;

    /// FNV fingerprint over the raw double bytes (shape included).
    uint64_t fingerprint(uint64_t state = 0xcbf29ce484222325ULL) const;
};

/// out = op(A, B) with optional transposes; accumulate adds instead of assign.
/// Shapes must already agree; throws ShapeError otherwise.
void matmul_into(Tensor& out, const Tensor& a, const Tensor& b,
                 bool trans_a = false, bool trans_b = false, bool accumulate = false);

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// Ordered name -> tensor container for module parameters. Insertion order is
/// part of the contract (fingerprints, optimizer state, serialization).
struct ParamStore {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    size_t count() const { return items.size(); }
    int64_t total_elements() const;
    uint64_t fingerprint() const;
};

}  // namespace soundedit
