#pragma once

#include "soundedit/autodiff.hpp"
#include "soundedit/embedding.hpp"

namespace soundedit {

struct LossWeights {
    double lambda_nce = 1.0;
    double lambda_l1 = 0.01;

    void validate() const;
};

struct LossReport {
    double l_ldm = 0.0;
    double l_nce = 0.0;
    double l_l1 = 0.0;
    double l_total = 0.0;
};

/// Mean squared error over all entries.
Var ldm_loss_t(Tape& t, Var eps_pred, Var eps_true);
double ldm_loss(const Tensor& eps_pred, const Tensor& eps_true);

/// (1/N) sum_j -log( exp(cos(qv_j, qi_j)/tau) / sum_k exp(cos(qv_j, qi_k)/tau) ).
/// Temperature defaults to 1, i.e. raw cosines inside the softmax. Rows of
/// qv/qi are the batch; zero-norm rows are a numeric error.
Var info_nce_t(Tape& t, Var qv, Var qi, double temperature = 1.0);
double info_nce(const std::vector<EmbeddingVector>& qv, const std::vector<EmbeddingVector>& qi,
                double temperature = 1.0);

/// l1 norm of the token block; sum reduction by default, mean optional.
Var l1_token_reg_t(Tape& t, Var tokens, bool mean_reduce = false);
double l1_token_reg(const Tensor& tokens, bool mean_reduce = false);

struct TotalLoss {
    Var total;          ///< on-tape combined objective
    LossReport report;  ///< matching scalar values
};

/// total = ldm + lambda_nce * nce + lambda_l1 * l1, composed left to right so
/// the report reproduces the on-tape value bit-exactly.
TotalLoss total_loss_t(Tape& t, Var ldm, Var nce, Var l1, const LossWeights& w);

}  // namespace soundedit
