#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "soundedit/tensor.hpp"

namespace soundedit {

/// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

/// Reverse-mode tape over 2-D double tensors. Ops append nodes in
/// topological order; backward() walks the tape in reverse. Gradients are
/// only materialized for nodes reachable from a parameter (requires_grad
/// propagates through ops), so inference-only tapes carry no backward cost.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- node creation ----
    Var input(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return input(std::move(value), false); }
    Var param(Tensor value) { return input(std::move(value), true); }

    // ---- access ----
    const Tensor& val(Var v) const;
    const Tensor& grad(Var v) const;  ///< zero tensor if never touched
    bool requires_grad(Var v) const;
    size_t node_count() const { return nodes_.size(); }

    /// Seed d(loss)/d(loss) = 1 for a 1x1 loss node and propagate.
    void backward(Var loss);

    // ---- elementwise / arithmetic ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div_elem(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var reciprocal(Var a);
    Var exp_op(Var a);
    Var log_op(Var a);
    Var sqrt_op(Var a);
    Var abs_op(Var a);     ///< subgradient at 0 defined as 0
    Var square(Var a);
    Var tanh_op(Var a);
    Var relu(Var a);
    Var gelu(Var a);       ///< exact erf form
    Var silu(Var a);

    // ---- linear algebra ----
    Var matmul_op(Var a, Var b);
    Var transpose_op(Var a);

    // ---- reductions / broadcasts (all 2-D) ----
    Var sum_all(Var a);                 ///< -> 1x1
    Var mean_all(Var a);                ///< -> 1x1
    Var row_sum(Var a);                 ///< n x m -> n x 1
    Var mean_rows(Var a);               ///< n x m -> 1 x m (column means)
    Var add_row_vec(Var a, Var v);      ///< a: n x m, v: 1 x m
    Var mul_rows(Var a, Var v);         ///< scales row i of a by v[i]; v: n x 1

    // ---- structure ----
    Var slice_rows(Var a, int r0, int r1);
    Var slice_cols(Var a, int c0, int c1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var diag_part(Var a);               ///< n x n -> n x 1
    Var reshape_op(Var a, Shape s);

    // ---- nn ----
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

    // ---- spatial (channel-last, row index y*w + x) ----
    Var im2col(Var x, int h, int w, int c, int k, int stride, int pad);
    Var upsample2x(Var x, int h, int w);

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void(Tape&, int)> backward;
    };

    std::vector<Node> nodes_;

    Var make(Tensor value, std::initializer_list<Var> parents,
             std::function<void(Tape&, int)> back);
    Tensor& grad_acc(Var v);  ///< lazily-allocated gradient accumulator
    const Tensor& v(Var x) const { return nodes_[x.i].value; }
    void check(Var x, const char* op) const;
};

/// Bound view of a ParamStore on a tape: name -> Var.
struct BoundParams {
    std::unordered_map<std::string, Var> vars;
    Var at(const std::string& name) const;
    bool has(const std::string& name) const { return vars.count(name) > 0; }
};

BoundParams bind_params(Tape& t, const ParamStore& store, bool trainable);

/// Copy tape gradients back into a name -> gradient map (post-backward).
std::vector<std::pair<std::string, Tensor>> collect_grads(const Tape& t, const ParamStore& store,
                                                          const BoundParams& bound);

/// y = x W^T (+ b). x: n x d_in, w: d_out x d_in, b: 1 x d_out.
Var linear(Tape& t, Var x, Var w);
Var linear(Tape& t, Var x, Var w, Var b);

}  // namespace soundedit
