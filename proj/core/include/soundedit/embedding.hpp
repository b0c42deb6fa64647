#pragma once

#include <string>

#include "soundedit/tensor.hpp"

namespace soundedit {

/// Embedding spaces are disjoint: cosine similarity across spaces is a bug,
/// caught at runtime in every similarity code path.
///   AUDIO    — raw audio-tower output (feeds the mapping network)
///   JOINT_VL — vision/language joint space (image tower, condition projection)
///   JOINT_AV — audio/visual joint space (audio-visual tower)
enum class EmbeddingSpace { AUDIO, JOINT_VL, JOINT_AV };

std::string to_string(EmbeddingSpace s);

struct EmbeddingVector {
    Tensor values;  // shape {1, d}
    EmbeddingSpace space = EmbeddingSpace::AUDIO;

    EmbeddingVector() = default;
    EmbeddingVector(Tensor v, EmbeddingSpace s);

    int dim() const;
    double norm() const;
};

/// Throws NumericError on zero-norm input, ShapeError on dim mismatch, and
/// NumericError when the spaces differ.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Same-space unchecked helper for raw rows (used inside batch ops after the
/// space check has been done once).
double cosine_raw(const Tensor& a, const Tensor& b);

}  // namespace soundedit
