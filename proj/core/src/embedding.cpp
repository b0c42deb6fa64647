#include "soundedit/embedding.hpp"

#include <cmath>

namespace soundedit {

std::string to_string(EmbeddingSpace s) {
    switch (s) {
        case EmbeddingSpace::AUDIO: return "AUDIO";
        case EmbeddingSpace::JOINT_VL: return "JOINT_VL";
        case EmbeddingSpace::JOINT_AV: return "JOINT_AV";
    }
    return "?";
}

EmbeddingVector::EmbeddingVector(Tensor v, EmbeddingSpace s) : values(std::move(v)), space(s) {
    if (values.shape.size() == 1) values.shape = {1, values.shape[0]};
    if (!values.is_matrix() || values.rows() != 1)
        throw ShapeError("EmbeddingVector: expected a single row vector");
}

int EmbeddingVector::dim() const {
    return values.cols();
}

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double v : values.data) s += v * v;
    return std::sqrt(s);
}

double cosine_raw(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw NumericError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.space != b.space)
        throw NumericError("cosine: embedding space mismatch (" + to_string(a.space) + " vs " +
                           to_string(b.space) + ")");
    if (a.dim() != b.dim())
        throw ShapeError("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
    return cosine_raw(a.values, b.values);
}

}  // namespace soundedit
