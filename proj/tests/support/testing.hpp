#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "soundedit/autodiff.hpp"

namespace sdtest {

using namespace soundedit;

inline double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central finite differences in float64 against the tape's analytic grads.
/// `f` must build a 1x1 loss from the given inputs on the given tape.
inline void check_gradients(const std::vector<Tensor>& inputs, const TapeFn& f,
                            double h = 1e-5, double tol = 1e-5) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(t.param(in));
    Var loss = f(t, vars);
    t.backward(loss);
    std::vector<Tensor> analytic;
    for (Var v : vars) analytic.push_back(t.grad(v));

    auto eval = [&](size_t k, int64_t i, double delta) {
        std::vector<Tensor> mod = inputs;
        mod[k][i] += delta;
        Tape t2;
        std::vector<Var> vs;
        for (const auto& in : mod) vs.push_back(t2.constant(in));
        return t2.val(f(t2, vs))[0];
    };

    for (size_t k = 0; k < inputs.size(); ++k) {
        for (int64_t i = 0; i < inputs[k].size(); ++i) {
            double fd = (eval(k, i, h) - eval(k, i, -h)) / (2.0 * h);
            double an = analytic[k][i];
            if (std::fabs(fd) < 1e-10 && std::fabs(an) < 1e-10) continue;
            INFO("input " << k << " element " << i << " analytic=" << an << " fd=" << fd);
            CHECK(rel_err(an, fd) < tol);
        }
    }
}

}  // namespace sdtest
