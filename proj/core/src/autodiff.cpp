#include "soundedit/autodiff.hpp"

#include <cmath>

namespace soundedit {

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (!t.is_matrix()) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

// ============================ tape plumbing ============================

void Tape::check(Var x, const char* op) const {
    if (x.i < 0 || x.i >= static_cast<int>(nodes_.size()))
        throw ShapeError(std::string(op) + ": invalid Var handle");
}

Var Tape::input(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(Tensor value, std::initializer_list<Var> parents,
               std::function<void(Tape&, int)> back) {
    bool rq = false;
    for (Var p : parents) {
        check(p, "op");
        rq = rq || nodes_[p.i].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = rq;
    if (rq) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::val(Var x) const {
    check(x, "val");
    return nodes_[x.i].value;
}

bool Tape::requires_grad(Var x) const {
    check(x, "requires_grad");
    return nodes_[x.i].requires_grad;
}

Tensor& Tape::grad_acc(Var x) {
    Node& n = nodes_[x.i];
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_live = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Var x) const {
    check(x, "grad");
    const Node& n = nodes_[x.i];
    if (!n.grad_live) {
        static thread_local Tensor zero;
        zero = Tensor::zeros(n.value.shape);
        return zero;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    check(loss, "backward");
    if (val(loss).size() != 1) throw ShapeError("backward: loss must be a single scalar");
    grad_acc(loss)[0] = 1.0;
    for (int i = loss.i; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad_live && n.backward) n.backward(*this, i);
    }
}

// ============================ elementwise ============================

Var Tape::add(Var a, Var b) {
    require_same_shape(v(a), v(b), "add");
    Tensor out = v(a);
    const Tensor& bb = v(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += bb[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_acc(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(v(a), v(b), "sub");
    Tensor out = v(a);
    const Tensor& bb = v(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= bb[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_acc(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(v(a), v(b), "mul");
    Tensor out = v(a);
    const Tensor& bb = v(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= bb[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        const Tensor& vb = t.val(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_acc(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

Var Tape::div_elem(Var a, Var b) {
    require_same_shape(v(a), v(b), "div_elem");
    Tensor out = v(a);
    const Tensor& bb = v(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= bb[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        const Tensor& vb = t.val(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_acc(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = v(a);
    for (auto& x : out.data) x *= c;
    return make(std::move(out), {a}, [a, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        }
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = v(a);
    for (auto& x : out.data) x += c;
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
    });
}

Var Tape::reciprocal(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = 1.0 / x;
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& o = t.nodes_[self].value;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * o[i] * o[i];
        }
    });
}

Var Tape::exp_op(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = std::exp(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& o = t.nodes_[self].value;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * o[i];
        }
    });
}

Var Tape::log_op(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = std::log(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
        }
    });
}

Var Tape::sqrt_op(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = std::sqrt(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& o = t.nodes_[self].value;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / o[i];
        }
    });
}

Var Tape::abs_op(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = std::fabs(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) {
                double s = va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
                ga[i] += g[i] * s;
            }
        }
    });
}

Var Tape::square(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x *= x;
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
        }
    });
}

Var Tape::tanh_op(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = std::tanh(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& o = t.nodes_[self].value;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - o[i] * o[i]);
        }
    });
}

Var Tape::relu(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += va[i] > 0.0 ? g[i] : 0.0;
        }
    });
}

Var Tape::gelu(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) {
                double x = va[i];
                double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[i] += g[i] * (cdf + x * pdf);
            }
        }
    });
}

Var Tape::silu(Var a) {
    Tensor out = v(a);
    for (auto& x : out.data) x = x * sigmoid(x);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.val(a);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) {
                double s = sigmoid(va[i]);
                ga[i] += g[i] * s * (1.0 + va[i] * (1.0 - s));
            }
        }
    });
}

// ============================ linear algebra ============================

Var Tape::matmul_op(Var a, Var b) {
    require_matrix(v(a), "matmul");
    require_matrix(v(b), "matmul");
    Tensor out = matmul(v(a), v(b));
    return make(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) matmul_into(t.grad_acc(a), g, t.val(b), false, true, true);
        if (t.requires_grad(b)) matmul_into(t.grad_acc(b), t.val(a), g, true, false, true);
    });
}

Var Tape::transpose_op(Var a) {
    require_matrix(v(a), "transpose");
    const Tensor& x = v(a);
    Tensor out({x.cols(), x.rows()});
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
        }
    });
}

// ============================ reductions ============================

Var Tape::sum_all(Var a) {
    Tensor out({1, 1});
    out[0] = v(a).sum();
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        double g = t.nodes_[self].grad[0];
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
        }
    });
}

Var Tape::mean_all(Var a) {
    const int64_t n = v(a).size();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    Tensor out({1, 1});
    out[0] = v(a).sum() / static_cast<double>(n);
    return make(std::move(out), {a}, [a, n](Tape& t, int self) {
        double g = t.nodes_[self].grad[0] / static_cast<double>(n);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
        }
    });
}

Var Tape::row_sum(Var a) {
    require_matrix(v(a), "row_sum");
    const Tensor& x = v(a);
    Tensor out({x.rows(), 1});
    for (int r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (int c = 0; c < x.cols(); ++c) s += x.at(r, c);
        out[r] = s;
    }
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < ga.rows(); ++r)
                for (int c = 0; c < ga.cols(); ++c) ga.at(r, c) += g[r];
        }
    });
}

Var Tape::mean_rows(Var a) {
    require_matrix(v(a), "mean_rows");
    const Tensor& x = v(a);
    const int n = x.rows();
    if (n == 0) throw ShapeError("mean_rows: zero rows");
    Tensor out({1, x.cols()});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < x.cols(); ++c) out[c] += x.at(r, c);
    for (auto& u : out.data) u /= n;
    return make(std::move(out), {a}, [a, n](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < ga.rows(); ++r)
                for (int c = 0; c < ga.cols(); ++c) ga.at(r, c) += g[c] / n;
        }
    });
}

Var Tape::add_row_vec(Var a, Var vv) {
    require_matrix(v(a), "add_row_vec");
    const Tensor& x = v(a);
    const Tensor& w = v(vv);
    if (w.rows() != 1 || w.cols() != x.cols())
        throw ShapeError("add_row_vec: vector must be 1 x cols(a)");
    Tensor out = x;
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) out.at(r, c) += w[c];
    return make(std::move(out), {a, vv}, [a, vv](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(vv)) {
            Tensor& gv = t.grad_acc(vv);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) gv[c] += g.at(r, c);
        }
    });
}

Var Tape::mul_rows(Var a, Var vv) {
    require_matrix(v(a), "mul_rows");
    const Tensor& x = v(a);
    const Tensor& w = v(vv);
    if (w.rows() != x.rows() || w.cols() != 1)
        throw ShapeError("mul_rows: vector must be rows(a) x 1");
    Tensor out = x;
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) out.at(r, c) *= w[r];
    return make(std::move(out), {a, vv}, [a, vv](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& x2 = t.val(a);
        const Tensor& w2 = t.val(vv);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga.at(r, c) += g.at(r, c) * w2[r];
        }
        if (t.requires_grad(vv)) {
            Tensor& gv = t.grad_acc(vv);
            for (int r = 0; r < g.rows(); ++r) {
                double s = 0.0;
                for (int c = 0; c < g.cols(); ++c) s += g.at(r, c) * x2.at(r, c);
                gv[r] += s;
            }
        }
    });
}

// ============================ structure ============================

Var Tape::slice_rows(Var a, int r0, int r1) {
    require_matrix(v(a), "slice_rows");
    const Tensor& x = v(a);
    if (r0 < 0 || r1 > x.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    Tensor out({r1 - r0, x.cols()});
    for (int r = r0; r < r1; ++r)
        for (int c = 0; c < x.cols(); ++c) out.at(r - r0, c) = x.at(r, c);
    return make(std::move(out), {a}, [a, r0](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga.at(r + r0, c) += g.at(r, c);
        }
    });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    require_matrix(v(a), "slice_cols");
    const Tensor& x = v(a);
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    Tensor out({x.rows(), c1 - c0});
    for (int r = 0; r < x.rows(); ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = x.at(r, c);
    return make(std::move(out), {a}, [a, c0](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) ga.at(r, c + c0) += g.at(r, c);
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty list");
    int cols = v(parts[0]).cols();
    int rows = 0;
    for (Var p : parts) {
        require_matrix(v(p), "concat_rows");
        if (v(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += v(p).rows();
    }
    Tensor out({rows, cols});
    int at = 0;
    for (Var p : parts) {
        const Tensor& x = v(p);
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < cols; ++c) out.at(at + r, c) = x.at(r, c);
        at += x.rows();
    }
    // make() takes an initializer_list; route the variadic case manually.
    bool rq = false;
    for (Var p : parts) rq = rq || requires_grad(p);
    std::vector<Var> ps = parts;
    Node n;
    n.value = std::move(out);
    n.requires_grad = rq;
    if (rq) {
        n.backward = [ps](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            int row0 = 0;
            for (Var p : ps) {
                const int pr = t.val(p).rows();
                if (t.requires_grad(p)) {
                    Tensor& gp = t.grad_acc(p);
                    for (int r = 0; r < pr; ++r)
                        for (int c = 0; c < g.cols(); ++c) gp.at(r, c) += g.at(row0 + r, c);
                }
                row0 += pr;
            }
        };
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty list");
    int rows = v(parts[0]).rows();
    int cols = 0;
    for (Var p : parts) {
        require_matrix(v(p), "concat_cols");
        if (v(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += v(p).cols();
    }
    Tensor out({rows, cols});
    int at = 0;
    for (Var p : parts) {
        const Tensor& x = v(p);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < x.cols(); ++c) out.at(r, at + c) = x.at(r, c);
        at += x.cols();
    }
    bool rq = false;
    for (Var p : parts) rq = rq || requires_grad(p);
    std::vector<Var> ps = parts;
    Node n;
    n.value = std::move(out);
    n.requires_grad = rq;
    if (rq) {
        n.backward = [ps](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            int col0 = 0;
            for (Var p : ps) {
                const int pc = t.val(p).cols();
                if (t.requires_grad(p)) {
                    Tensor& gp = t.grad_acc(p);
                    for (int r = 0; r < g.rows(); ++r)
                        for (int c = 0; c < pc; ++c) gp.at(r, c) += g.at(r, col0 + c);
                }
                col0 += pc;
            }
        };
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::diag_part(Var a) {
    require_matrix(v(a), "diag_part");
    const Tensor& x = v(a);
    if (x.rows() != x.cols()) throw ShapeError("diag_part: matrix must be square");
    Tensor out({x.rows(), 1});
    for (int r = 0; r < x.rows(); ++r) out[r] = x.at(r, r);
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r) ga.at(r, r) += g[r];
        }
    });
}

Var Tape::reshape_op(Var a, Shape s) {
    Tensor out = v(a).reshaped(std::move(s));
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
    });
}

// ============================ nn ============================

Var Tape::softmax_rows(Var a) {
    require_matrix(v(a), "softmax_rows");
    Tensor out = v(a);
    for (int r = 0; r < out.rows(); ++r) {
        double mx = out.at(r, 0);
        for (int c = 1; c < out.cols(); ++c) mx = std::max(mx, out.at(r, c));
        double z = 0.0;
        for (int c = 0; c < out.cols(); ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            z += out.at(r, c);
        }
        for (int c = 0; c < out.cols(); ++c) out.at(r, c) /= z;
    }
    return make(std::move(out), {a}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& s = t.nodes_[self].value;
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_acc(a);
            for (int r = 0; r < g.rows(); ++r) {
                double dot = 0.0;
                for (int c = 0; c < g.cols(); ++c) dot += g.at(r, c) * s.at(r, c);
                for (int c = 0; c < g.cols(); ++c)
                    ga.at(r, c) += s.at(r, c) * (g.at(r, c) - dot);
            }
        }
    });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    require_matrix(v(x), "layer_norm_rows");
    const Tensor& xv = v(x);
    const int n = xv.rows(), m = xv.cols();
    const Tensor& gm = v(gamma);
    const Tensor& bt = v(beta);
    if (gm.rows() != 1 || gm.cols() != m || bt.rows() != 1 || bt.cols() != m)
        throw ShapeError("layer_norm_rows: gamma/beta must be 1 x cols(x)");

    Tensor xhat({n, m});
    Tensor istd({n, 1});
    Tensor out({n, m});
    for (int r = 0; r < n; ++r) {
        double mu = 0.0;
        for (int c = 0; c < m; ++c) mu += xv.at(r, c);
        mu /= m;
        double var = 0.0;
        for (int c = 0; c < m; ++c) {
            double d = xv.at(r, c) - mu;
            var += d * d;
        }
        var /= m;
        double is = 1.0 / std::sqrt(var + eps);
        istd[r] = is;
        for (int c = 0; c < m; ++c) {
            xhat.at(r, c) = (xv.at(r, c) - mu) * is;
            out.at(r, c) = gm[c] * xhat.at(r, c) + bt[c];
        }
    }
    return make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat, istd, m](Tape& t, int self) {
                    const Tensor& g = t.nodes_[self].grad;
                    const Tensor& gm = t.val(gamma);
                    if (t.requires_grad(x)) {
                        Tensor& gx = t.grad_acc(x);
                        for (int r = 0; r < g.rows(); ++r) {
                            double mean_gy = 0.0, mean_gyxh = 0.0;
                            for (int c = 0; c < m; ++c) {
                                double gy = g.at(r, c) * gm[c];
                                mean_gy += gy;
                                mean_gyxh += gy * xhat.at(r, c);
                            }
                            mean_gy /= m;
                            mean_gyxh /= m;
                            for (int c = 0; c < m; ++c) {
                                double gy = g.at(r, c) * gm[c];
                                gx.at(r, c) += istd[r] * (gy - mean_gy - xhat.at(r, c) * mean_gyxh);
                            }
                        }
                    }
                    if (t.requires_grad(gamma)) {
                        Tensor& gg = t.grad_acc(gamma);
                        for (int r = 0; r < g.rows(); ++r)
                            for (int c = 0; c < m; ++c) gg[c] += g.at(r, c) * xhat.at(r, c);
                    }
                    if (t.requires_grad(beta)) {
                        Tensor& gb = t.grad_acc(beta);
                        for (int r = 0; r < g.rows(); ++r)
                            for (int c = 0; c < m; ++c) gb[c] += g.at(r, c);
                    }
                });
}

// ============================ spatial ============================

Var Tape::im2col(Var xv, int h, int w, int c, int k, int stride, int pad) {
    require_matrix(v(xv), "im2col");
    const Tensor& x = v(xv);
    if (x.rows() != h * w || x.cols() != c) throw ShapeError("im2col: input must be (h*w) x c");
    if (k < 1 || stride < 1 || pad < 0) throw ShapeError("im2col: bad conv geometry");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    if (oh < 1 || ow < 1) throw ShapeError("im2col: kernel larger than padded input");

    Tensor out({oh * ow, k * k * c});
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int orow = oy * ow + ox;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    const int irow = iy * w + ix;
                    for (int ch = 0; ch < c; ++ch)
                        out.at(orow, (ky * k + kx) * c + ch) = x.at(irow, ch);
                }
            }
        }
    }
    return make(std::move(out), {xv}, [xv, h, w, c, k, stride, pad](Tape& t, int self) {
        if (!t.requires_grad(xv)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_acc(xv);
        const int ow = (w + 2 * pad - k) / stride + 1;
        const int oh = (h + 2 * pad - k) / stride + 1;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int orow = oy * ow + ox;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        const int irow = iy * w + ix;
                        for (int ch = 0; ch < c; ++ch)
                            gx.at(irow, ch) += g.at(orow, (ky * k + kx) * c + ch);
                    }
                }
            }
        }
    });
}

Var Tape::upsample2x(Var xv, int h, int w) {
    require_matrix(v(xv), "upsample2x");
    const Tensor& x = v(xv);
    if (x.rows() != h * w) throw ShapeError("upsample2x: input must be (h*w) x c");
    const int c = x.cols();
    Tensor out({4 * h * w, c});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int orow = (2 * y + dy) * (2 * w) + (2 * xx + dx);
                    for (int ch = 0; ch < c; ++ch) out.at(orow, ch) = x.at(y * w + xx, ch);
                }
    return make(std::move(out), {xv}, [xv, h, w](Tape& t, int self) {
        if (!t.requires_grad(xv)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_acc(xv);
        const int c = gx.cols();
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int orow = (2 * y + dy) * (2 * w) + (2 * xx + dx);
                        for (int ch = 0; ch < c; ++ch) gx.at(y * w + xx, ch) += g.at(orow, ch);
                    }
    });
}

// ============================ helpers ============================

Var BoundParams::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("BoundParams: unknown parameter " + name);
    return it->second;
}

BoundParams bind_params(Tape& t, const ParamStore& store, bool trainable) {
    BoundParams b;
    for (const auto& [name, tensor] : store.items) b.vars[name] = t.input(tensor, trainable);
    return b;
}

std::vector<std::pair<std::string, Tensor>> collect_grads(const Tape& t, const ParamStore& store,
                                                          const BoundParams& bound) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(store.items.size());
    for (const auto& [name, _] : store.items) out.emplace_back(name, t.grad(bound.at(name)));
    return out;
}

Var linear(Tape& t, Var x, Var w) {
    return t.matmul_op(x, t.transpose_op(w));
}

Var linear(Tape& t, Var x, Var w, Var b) {
    return t.add_row_vec(t.matmul_op(x, t.transpose_op(w)), b);
}

}  // namespace soundedit
