#pragma once

#include <array>
#include <functional>
#include <map>

#include "soundedit/encoders.hpp"

namespace soundedit {

// ============================ similarity metrics ============================

/// Audio-visual similarity: cosine between the joint-space embeddings of the
/// sound and the edited image.
double avs(const AudioClip& audio, const Image& edited, const EncoderSuite& suite);

/// Image-image similarity: cosine between image-tower embeddings.
double iis(const Image& edited, const Image& reference, const EncoderSuite& suite);

/// Text-visual similarity: cosine between a category-text embedding (a
/// JOINT_VL fixture; no text tokenizer in scope) and the edited image.
double tvs(const EmbeddingVector& category_text, const Image& edited, const EncoderSuite& suite);

// ============================ FID ============================

/// Fréchet distance between Gaussian fits of two feature sets (rows are
/// samples): ||mu1-mu2||^2 + tr(S1) + tr(S2) - 2 tr((S1 S2)^(1/2)).
/// Covariances are unbiased (n-1) plus 1e-6 I; a single-row set uses the
/// zero covariance, so two singletons reduce to the squared mean distance.
/// The square root comes from the eigendecomposition of the symmetrized
/// product S1^(1/2) S2 S1^(1/2); small negative eigenvalues clip to zero,
/// decisively negative ones raise NumericError with the spectrum range.
double fid(const Tensor& features_a, const Tensor& features_b);

// ============================ dataset evaluation ============================

struct MetricsReport {
    double avs = 0.0;
    double iis = 0.0;
    double tvs = 0.0;
    double fid = 0.0;
    int64_t n_samples = 0;

    void validate() const;
};

struct EvalSample {
    std::string id;  ///< stable identity; aggregation is sorted by it
    AudioClip audio;
    Image edited;
    Image reference;
    EmbeddingVector category_text;
};

/// Mean AVS/IIS/TVS over the samples plus FID between reference and edited
/// image features (from the configured image embedder). Samples are processed
/// in id order, so the report is bitwise independent of input order.
MetricsReport evaluate_dataset(const std::vector<EvalSample>& samples, const EncoderSuite& suite);

// ============================ volume sweep ============================

/// One edit given a source image and a (possibly volume-manipulated) sound.
/// Implementations must be deterministic: the sweep calls it once per gain
/// with identical everything-but-gain.
using EditFn = std::function<Image(const Image&, const AudioClip&)>;

struct VolumeSweepResult {
    std::vector<double> gains;
    std::vector<Image> images;
    std::vector<double> avs_trace;
    bool nondecreasing = false;  ///< whether the AVS trace never drops
};

/// Re-edits `src` once per gain (each gain multiplies the clip's own gain)
/// and reports the per-gain AVS trace.
VolumeSweepResult volume_sweep(const Image& src, const AudioClip& audio,
                               const std::vector<double>& gains, const EditFn& edit,
                               const EncoderSuite& suite);

// ============================ MOS aggregation ============================

struct MOSCell {
    double mean = 0.0;
    int64_t count = 0;
};

/// Per-method, per-question (Q1..Q3) aggregation of 1-5 ratings.
struct MOSTable {
    std::map<std::string, std::array<MOSCell, 3>> methods;
    int64_t rejected = 0;  ///< structurally valid rows whose rating fell outside 1..5

    const MOSCell& cell(const std::string& method, int question) const;  ///< question in 1..3
    void validate() const;
};

/// Aggregate a response CSV with columns (rater_id, sample_id, method,
/// question, rating). A header row is detected and skipped. Structurally
/// malformed rows raise IoError naming the line; parseable rows with ratings
/// outside 1..5 are rejected and counted instead.
MOSTable mos_aggregate(const std::string& csv_path);

}  // namespace soundedit
