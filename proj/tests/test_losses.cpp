#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "soundedit/losses.hpp"
#include "support/testing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace soundedit;
using sdtest::check_gradients;

namespace {

// independent double-loop implementation used as the oracle
double info_nce_oracle(const Tensor& qv, const Tensor& qi, double tau) {
    int n = qv.rows(), d = qv.cols();
    auto cosine = [&](int j, int k) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int c = 0; c < d; ++c) {
            dot += qv.at(j, c) * qi.at(k, c);
            na += qv.at(j, c) * qv.at(j, c);
            nb += qi.at(k, c) * qi.at(k, c);
        }
        return dot / std::sqrt(na * nb);
    };
    double loss = 0.0;
    for (int j = 0; j < n; ++j) {
        double denom = 0.0;
        for (int k = 0; k < n; ++k) denom += std::exp(cosine(j, k) / tau);
        loss += -std::log(std::exp(cosine(j, j) / tau) / denom);
    }
    return loss / n;
}

std::vector<EmbeddingVector> rows_as_embeddings(const Tensor& m, EmbeddingSpace space) {
    std::vector<EmbeddingVector> out;
    for (int r = 0; r < m.rows(); ++r) {
        Tensor row = Tensor::zeros({1, m.cols()});
        for (int c = 0; c < m.cols(); ++c) row.at(0, c) = m.at(r, c);
        out.emplace_back(row, space);
    }
    return out;
}

}  // namespace

TEST_CASE("denoising loss is the mean squared error over all entries") {
    RandomStream rng(3);
    Tensor eps = Tensor::randn({6, 4}, rng);
    CHECK(ldm_loss(eps, eps) == 0.0);

    // all-ones prediction against a zero target: every squared residual is 1
    Tensor pred(Shape{2, 2}, 1.0);
    Tensor zero = Tensor::zeros({2, 2});
    CHECK(ldm_loss(pred, zero) == 1.0);

    // hand-computed mean over mixed residuals
    Tensor a = Tensor::zeros({1, 4});
    Tensor b = Tensor::zeros({1, 4});
    a.at(0, 0) = 2.0;
    a.at(0, 1) = -1.0;
    b.at(0, 2) = 0.5;
    CHECK(ldm_loss(a, b) == doctest::Approx((4.0 + 1.0 + 0.25) / 4.0).epsilon(1e-15));

    CHECK_THROWS_AS(ldm_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);

    // analytic gradient: d/dpred = 2 (pred - true) / count
    Tape t;
    Var p = t.param(a);
    Var loss = ldm_loss_t(t, p, t.constant(b));
    t.backward(loss);
    const Tensor& g = t.grad(p);
    for (int c = 0; c < 4; ++c)
        CHECK(g.at(0, c) == doctest::Approx(2.0 * (a.at(0, c) - b.at(0, c)) / 4.0)
                                .epsilon(1e-14));

    check_gradients({a}, [&](Tape& tape, const std::vector<Var>& vs) {
        return ldm_loss_t(tape, vs[0], tape.constant(b));
    });
}

TEST_CASE("contrastive loss hits its closed forms") {
    // a single pair has no negatives: perfect alignment, zero loss
    Tensor one = Tensor::zeros({1, 3});
    one.at(0, 1) = 0.7;
    Tape t1;
    CHECK(t1.val(info_nce_t(t1, t1.constant(one), t1.constant(one)))[0] ==
          doctest::Approx(0.0).epsilon(1e-15));

    // two mutually orthogonal matched pairs at tau = 1:
    // logits are the identity, so each row's matched probability is
    // e / (e + 1) and the loss is log(1 + 1/e)
    Tensor qv = Tensor::zeros({2, 4});
    Tensor qi = Tensor::zeros({2, 4});
    qv.at(0, 0) = 1.0;
    qi.at(0, 0) = 2.0;  // scale must not matter: cosines only
    qv.at(1, 1) = 1.0;
    qi.at(1, 1) = 0.5;
    Tape t2;
    double got = t2.val(info_nce_t(t2, t2.constant(qv), t2.constant(qi)))[0];
    CHECK(got == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("contrastive loss matches an independent implementation") {
    RandomStream rng(11);
    Tensor qv = Tensor::randn({5, 8}, rng);
    Tensor qi = Tensor::randn({5, 8}, rng);

    for (double tau : {1.0, 0.5, 0.07}) {
        Tape t;
        double got = t.val(info_nce_t(t, t.constant(qv), t.constant(qi), tau))[0];
        CHECK(got == doctest::Approx(info_nce_oracle(qv, qi, tau)).epsilon(1e-10));
    }

    // permuting both batches together leaves the loss unchanged
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Tensor pv = Tensor::zeros({5, 8}), pi = Tensor::zeros({5, 8});
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 8; ++c) {
            pv.at(r, c) = qv.at(perm[r], c);
            pi.at(r, c) = qi.at(perm[r], c);
        }
    Tape ta, tb;
    double base = ta.val(info_nce_t(ta, ta.constant(qv), ta.constant(qi)))[0];
    double permuted = tb.val(info_nce_t(tb, tb.constant(pv), tb.constant(pi)))[0];
    CHECK(std::abs(base - permuted) <= 1e-9);

    // bounded: cosines live in [-1, 1], so the loss sits in [-2, log N + 2]
    CHECK(base >= -2.0);
    CHECK(base <= std::log(5.0) + 2.0);
}

TEST_CASE("contrastive loss validates inputs") {
    Tensor qv = Tensor::zeros({2, 3});
    Tensor qi = Tensor::zeros({2, 3});
    qv.at(0, 0) = 1.0;
    qv.at(1, 1) = 1.0;
    qi.at(0, 0) = 1.0;  // second row of qi stays zero
    Tape t;
    CHECK_THROWS_AS(info_nce_t(t, t.constant(qv), t.constant(qi)), NumericError);

    Tape t2;
    RandomStream rng(4);
    CHECK_THROWS_AS(info_nce_t(t2, t2.constant(Tensor::randn({2, 3}, rng)),
                               t2.constant(Tensor::randn({3, 3}, rng))),
                    ShapeError);
    Tape t3;
    CHECK_THROWS_AS(info_nce_t(t3, t3.constant(Tensor::randn({2, 3}, rng)),
                               t3.constant(Tensor::randn({2, 3}, rng)), 0.0),
                    ConfigError);

    // value-level API enforces matching embedding spaces
    Tensor a = Tensor::randn({3, 6}, rng);
    Tensor b = Tensor::randn({3, 6}, rng);
    auto va = rows_as_embeddings(a, EmbeddingSpace::JOINT_VL);
    auto vb = rows_as_embeddings(b, EmbeddingSpace::JOINT_VL);
    CHECK(info_nce(va, vb) == doctest::Approx(info_nce_oracle(a, b, 1.0)).epsilon(1e-10));
    auto wrong = rows_as_embeddings(b, EmbeddingSpace::JOINT_AV);
    CHECK_THROWS_AS(info_nce(va, wrong), NumericError);
    CHECK_THROWS_AS(info_nce(va, std::vector<EmbeddingVector>{vb[0]}), ShapeError);
}

TEST_CASE("contrastive loss gradients match finite differences") {
    RandomStream rng(21);
    std::vector<Tensor> inputs = {Tensor::randn({4, 8}, rng), Tensor::randn({4, 8}, rng)};
    check_gradients(inputs, [](Tape& t, const std::vector<Var>& vs) {
        return info_nce_t(t, vs[0], vs[1], 0.7);
    }, 1e-5, 2e-4);
}

TEST_CASE("token regularizer is an l1 norm with a zero subgradient at zero") {
    Tensor tokens = Tensor::zeros({2, 2});
    tokens.at(0, 0) = 1.0;
    tokens.at(0, 1) = -1.0;
    tokens.at(1, 0) = 2.0;
    CHECK(l1_token_reg(tokens) == 4.0);
    CHECK(l1_token_reg(tokens, true) == 1.0);  // mean reduction
    CHECK(l1_token_reg(Tensor::zeros({3, 5})) == 0.0);

    Tape t;
    Var v = t.param(tokens);
    t.backward(l1_token_reg_t(t, v));
    const Tensor& g = t.grad(v);
    CHECK(g.at(0, 0) == 1.0);
    CHECK(g.at(0, 1) == -1.0);
    CHECK(g.at(1, 0) == 1.0);
    CHECK(g.at(1, 1) == 0.0);  // subgradient at the kink

    // finite differences away from the kink
    RandomStream rng(8);
    Tensor smooth = Tensor::randn({3, 4}, rng);
    for (int64_t i = 0; i < smooth.size(); ++i)
        if (std::abs(smooth[i]) < 0.1) smooth[i] = 0.1;
    check_gradients({smooth}, [](Tape& tape, const std::vector<Var>& vs) {
        return l1_token_reg_t(tape, vs[0]);
    });
}

TEST_CASE("total objective composes the three terms with configured weights") {
    auto scalar = [](Tape& t, double x) {
        Tensor v(Shape{1, 1}, x);
        return t.constant(v);
    };

    // unit weights on (0.5, 0.3, 0.2) sum to exactly 1
    Tape t;
    LossWeights unit;
    unit.lambda_nce = 1.0;
    unit.lambda_l1 = 1.0;
    TotalLoss combo = total_loss_t(t, scalar(t, 0.5), scalar(t, 0.3), scalar(t, 0.2), unit);
    CHECK(t.val(combo.total)[0] == 1.0);
    CHECK(combo.report.l_total == 1.0);
    CHECK(combo.report.l_ldm == 0.5);
    CHECK(combo.report.l_nce == 0.3);
    CHECK(combo.report.l_l1 == 0.2);

    // the report reproduces the on-tape composition bit for bit
    Tape t2;
    LossWeights w;
    w.lambda_nce = 0.77;
    w.lambda_l1 = 0.013;
    TotalLoss awkward =
        total_loss_t(t2, scalar(t2, 0.1234), scalar(t2, 0.987), scalar(t2, 0.456), w);
    CHECK(awkward.report.l_total == t2.val(awkward.total)[0]);
    CHECK(awkward.report.l_total == 0.1234 + w.lambda_nce * 0.987 + w.lambda_l1 * 0.456);

    // zero weights reduce to the denoising term alone
    Tape t3;
    LossWeights off;
    off.lambda_nce = 0.0;
    off.lambda_l1 = 0.0;
    CHECK(total_loss_t(t3, scalar(t3, 0.42), scalar(t3, 9.0), scalar(t3, 9.0), off)
              .report.l_total == 0.42);

    // heavier contrastive weight raises the total
    Tape t4, t5;
    LossWeights light, heavy;
    light.lambda_nce = 0.5;
    heavy.lambda_nce = 1.5;
    double lo = total_loss_t(t4, scalar(t4, 0.1), scalar(t4, 0.4), scalar(t4, 0.0), light)
                    .report.l_total;
    double hi = total_loss_t(t5, scalar(t5, 0.1), scalar(t5, 0.4), scalar(t5, 0.0), heavy)
                    .report.l_total;
    CHECK(hi > lo);

    LossWeights bad;
    bad.lambda_nce = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.lambda_nce = 1.0;
    bad.lambda_l1 = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    // gradients flow through the weighted sum to every term
    RandomStream rng(6);
    Tensor pred = Tensor::randn({4, 3}, rng);
    Tensor target = Tensor::randn({4, 3}, rng);
    Tensor qv = Tensor::randn({3, 5}, rng);
    Tensor qi = Tensor::randn({3, 5}, rng);
    Tensor tokens = Tensor::randn({2, 6}, rng);
    for (int64_t i = 0; i < tokens.size(); ++i)
        if (std::abs(tokens[i]) < 0.1) tokens[i] = -0.2;
    LossWeights lw;
    check_gradients({pred, qv, tokens}, [&](Tape& tape, const std::vector<Var>& vs) {
        Var ldm = ldm_loss_t(tape, vs[0], tape.constant(target));
        Var nce = info_nce_t(tape, vs[1], tape.constant(qi));
        Var l1 = l1_token_reg_t(tape, vs[2]);
        return total_loss_t(tape, ldm, nce, l1, lw).total;
    }, 1e-5, 2e-4);
}
