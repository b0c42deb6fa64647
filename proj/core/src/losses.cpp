#include "soundedit/losses.hpp"

#include <cmath>

namespace soundedit {

void LossWeights::validate() const {
    if (!(lambda_nce >= 0.0) || !std::isfinite(lambda_nce))
        throw ConfigError("losses.lambda_nce must be finite and >= 0");
    if (!(lambda_l1 >= 0.0) || !std::isfinite(lambda_l1))
        throw ConfigError("losses.lambda_l1 must be finite and >= 0");
}

Var ldm_loss_t(Tape& t, Var eps_pred, Var eps_true) {
    if (!t.val(eps_pred).same_shape(t.val(eps_true)))
        throw ShapeError("ldm_loss: prediction/target shape mismatch");
    return t.mean_all(t.square(t.sub(eps_pred, eps_true)));
}

double ldm_loss(const Tensor& eps_pred, const Tensor& eps_true) {
    Tape t;
    return t.val(ldm_loss_t(t, t.constant(eps_pred), t.constant(eps_true)))[0];
}

Var info_nce_t(Tape& t, Var qv, Var qi, double temperature) {
    const Tensor& a = t.val(qv);
    const Tensor& b = t.val(qi);
    if (!a.is_matrix() || !b.is_matrix() || a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("info_nce: batches must be equal-shape matrices");
    if (!(temperature > 0.0)) throw ConfigError("info_nce temperature must be positive");
    const int n = a.rows();
    for (int r = 0; r < n; ++r) {
        double na = 0.0, nb = 0.0;
        for (int c = 0; c < a.cols(); ++c) {
            na += a.at(r, c) * a.at(r, c);
            nb += b.at(r, c) * b.at(r, c);
        }
        if (na < 1e-24 || nb < 1e-24)
            throw NumericError("info_nce: zero-norm embedding in row " + std::to_string(r));
    }

    auto normalize = [&](Var x) {
        Var norms = t.sqrt_op(t.row_sum(t.square(x)));  // n x 1
        return t.mul_rows(x, t.reciprocal(norms));
    };
    Var an = normalize(qv);
    Var bn = normalize(qi);
    Var logits = t.scale(t.matmul_op(an, t.transpose_op(bn)), 1.0 / temperature);
    Var probs = t.softmax_rows(logits);  // row j: softmax over candidates k
    Var diag = t.diag_part(probs);       // matched-pair probabilities
    return t.scale(t.sum_all(t.log_op(diag)), -1.0 / n);
}

double info_nce(const std::vector<EmbeddingVector>& qv, const std::vector<EmbeddingVector>& qi,
                double temperature) {
    if (qv.empty() || qv.size() != qi.size())
        throw ShapeError("info_nce: batches must be non-empty and equal-size");
    EmbeddingSpace space = qv[0].space;
    int d = qv[0].dim();
    Tensor a = Tensor::zeros({static_cast<int>(qv.size()), d});
    Tensor b = Tensor::zeros({static_cast<int>(qv.size()), d});
    for (size_t j = 0; j < qv.size(); ++j) {
        if (qv[j].space != space || qi[j].space != space)
            throw NumericError("info_nce: embeddings from different spaces (" +
                               to_string(qv[j].space) + " vs " + to_string(qi[j].space) + ")");
        if (qv[j].dim() != d || qi[j].dim() != d)
            throw ShapeError("info_nce: embedding dim mismatch");
        for (int c = 0; c < d; ++c) {
            a.at(static_cast<int>(j), c) = qv[j].values.at(0, c);
            b.at(static_cast<int>(j), c) = qi[j].values.at(0, c);
        }
    }
    Tape t;
    return t.val(info_nce_t(t, t.constant(a), t.constant(b), temperature))[0];
}

Var l1_token_reg_t(Tape& t, Var tokens, bool mean_reduce) {
    Var a = t.abs_op(tokens);
    return mean_reduce ? t.mean_all(a) : t.sum_all(a);
}

double l1_token_reg(const Tensor& tokens, bool mean_reduce) {
    Tape t;
    return t.val(l1_token_reg_t(t, t.constant(tokens), mean_reduce))[0];
}

TotalLoss total_loss_t(Tape& t, Var ldm, Var nce, Var l1, const LossWeights& w) {
    w.validate();
    Var total = t.add(t.add(ldm, t.scale(nce, w.lambda_nce)), t.scale(l1, w.lambda_l1));
    TotalLoss out;
    out.total = total;
    out.report.l_ldm = t.val(ldm)[0];
    out.report.l_nce = t.val(nce)[0];
    out.report.l_l1 = t.val(l1)[0];
    out.report.l_total = t.val(total)[0];
    return out;
}

}  // namespace soundedit
