#include "soundedit/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace soundedit {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const EMat>;
using Map = Eigen::Map<EMat>;

int64_t shape_size(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= d;
    }
    return s.empty() ? 0 : n;
}

}  // namespace

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_size(shape)), fill);
}

Tensor Tensor::randn(Shape s, RandomStream& rng, double stddev) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::from_values(Shape s, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(s);
    if (shape_size(t.shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("from_values: size mismatch");
    t.data = std::move(values);
    return t;
}

int64_t Tensor::size() const {
    return static_cast<int64_t>(data.size());
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '{';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << '}';
    return os.str();
}

int Tensor::rows() const {
    if (!is_matrix()) throw ShapeError("rows(): tensor is not 2-D, shape " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (!is_matrix()) throw ShapeError("cols(): tensor is not 2-D, shape " + shape_str());
    return shape[1];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<size_t>(r) * cols() + c];
}

double Tensor::at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols() + c];
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_size(s) != size()) throw ShapeError("reshaped: element count mismatch");
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

uint64_t Tensor::fingerprint(uint64_t state) const {
    for (int d : shape) state = fnv1a64(&d, sizeof(d), state);
    if (!data.empty()) state = fnv1a64(data.data(), data.size() * sizeof(double), state);
    return state;
}

void matmul_into(Tensor& out, const Tensor& a, const Tensor& b,
                 bool trans_a, bool trans_b, bool accumulate) {
    const int ar = trans_a ? a.cols() : a.rows();
    const int ac = trans_a ? a.rows() : a.cols();
    const int br = trans_b ? b.cols() : b.rows();
    const int bc = trans_b ? b.rows() : b.cols();
    if (ac != br)
        throw ShapeError("matmul: inner dimension mismatch " + a.shape_str() + " x " + b.shape_str());
    if (out.rows() != ar || out.cols() != bc) throw ShapeError("matmul: bad output shape");

    MapC A(a.data.data(), a.rows(), a.cols());
    MapC B(b.data.data(), b.rows(), b.cols());
    Map O(out.data.data(), out.rows(), out.cols());

    // Four explicit branches keep Eigen expression types simple.
    if (!trans_a && !trans_b) {
        if (accumulate) O.noalias() += A * B; else O.noalias() = A * B;
    } else if (trans_a && !trans_b) {
        if (accumulate) O.noalias() += A.transpose() * B; else O.noalias() = A.transpose() * B;
    } else if (!trans_a && trans_b) {
        if (accumulate) O.noalias() += A * B.transpose(); else O.noalias() = A * B.transpose();
    } else {
        if (accumulate) O.noalias() += A.transpose() * B.transpose();
        else O.noalias() = A.transpose() * B.transpose();
    }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    Tensor out({trans_a ? a.cols() : a.rows(), trans_b ? b.rows() : b.cols()});
    matmul_into(out, a, b, trans_a, trans_b, false);
    return out;
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (has(name)) throw ConfigError("ParamStore: duplicate parameter name " + name);
    items.emplace_back(name, std::move(t));
    return items.back().second;
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, _] : items)
        if (n == name) return true;
    return false;
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& [n, t] : items)
        if (n == name) return t;
    throw ConfigError("ParamStore: unknown parameter " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return t;
    throw ConfigError("ParamStore: unknown parameter " + name);
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [_, t] : items) n += t.size();
    return n;
}

uint64_t ParamStore::fingerprint() const {
    uint64_t state = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : items) {
        state = fnv1a64(name.data(), name.size(), state);
        state = t.fingerprint(state);
    }
    return state;
}

}  // namespace soundedit
