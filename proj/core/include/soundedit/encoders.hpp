#pragma once

#include <memory>
#include <utility>

#include "soundedit/embedding.hpp"
#include "soundedit/media.hpp"
#include "soundedit/transformer.hpp"

namespace soundedit {

/// Dimensions and seeds for the pluggable encoder stack. `backend` selects an
/// implementation family; only "toy" ships here, and unknown names are a
/// configuration error so typos fail loudly instead of silently downgrading.
struct EncoderConfig {
    std::string backend = "toy";
    uint64_t seed = 7;
    int d_audio = 16;  ///< audio tower output width
    int d_joint = 32;  ///< vision-language space width
    int d_av = 32;     ///< audio-visual space width
    int d_cond = 24;   ///< condition token width
    int n_ctx = 8;     ///< condition sequence length after padding
    int cond_layers = 2;
    int cond_heads = 4;
    bool positional_encoding = true;
    int n_bands = 8;
    int n_fft = 1024;
    int hop = 512;

    void validate() const;
};

// ---- spectral / histogram helpers (exported so tests can build exact fixtures) ----

/// Half-open DFT-bin ranges [lo, hi), mel-spaced between 50 Hz and Nyquist.
/// Edges are snapped to integer bins and forced strictly increasing, so a pure
/// tone at an exact bin frequency k * sr / n_fft lands in exactly one band.
std::vector<std::pair<int, int>> mel_band_bins(int sample_rate, int n_fft, int n_bands);

/// Mean per-band spectral power. Frames are rectangular windows of n_fft
/// samples at the given hop, full frames only; a clip shorter than one frame
/// is zero-padded to a single frame. Per bin, P = (re^2 + im^2) / n_fft^2;
/// band power averages its bins, then frames. Gain is NOT applied here.
std::vector<double> band_powers(const std::vector<double>& samples, int sample_rate,
                                int n_fft, int hop, int n_bands);

/// L1-normalized luminance histogram; luminance = channel mean per pixel.
std::vector<double> image_luminance_histogram(const Image& img, int n_bins);

// ---- pluggable interfaces ----

struct AudioEncoder {
    virtual ~AudioEncoder() = default;
    virtual EmbeddingVector embed(const AudioClip& clip) const = 0;
    virtual int dim() const = 0;
    virtual uint64_t fingerprint() const = 0;
};

struct ImageEncoder {
    virtual ~ImageEncoder() = default;
    virtual EmbeddingVector embed(const Image& img) const = 0;
    virtual int dim() const = 0;
    virtual uint64_t fingerprint() const = 0;
};

/// Shared audio-visual space used by the cross-modal relevance metric.
struct JointEmbedder {
    virtual ~JointEmbedder() = default;
    virtual EmbeddingVector embed_audio(const AudioClip& clip) const = 0;
    virtual EmbeddingVector embed_image(const Image& img) const = 0;
    virtual int dim() const = 0;
    virtual uint64_t fingerprint() const = 0;
};

/// Audio tower: psi = [1, L_1..L_B, L_1 - mean(L) .. L_B - mean(L)] with
/// L_b = log1p(band power of the gained samples); v = r * W psi / |W psi|
/// where r is the RMS of the gained (clamped) samples. Because r is the norm
/// and clamping is pointwise monotone, |v| is non-decreasing in clip gain,
/// and silence maps to the zero vector at any gain.
class ToyAudioEncoder : public AudioEncoder {
  public:
    explicit ToyAudioEncoder(const EncoderConfig& cfg);
    EmbeddingVector embed(const AudioClip& clip) const override;
    int dim() const override { return cfg_.d_audio; }
    uint64_t fingerprint() const override { return w_.fingerprint(); }
    const Tensor& weights() const { return w_; }

  private:
    EncoderConfig cfg_;
    Tensor w_;  // d_audio x (1 + 2 * n_bands)
};

/// Image tower: psi = [1.5, patch channel means - 0.5, patch channel
/// variances] over a 4x4 grid; v = W psi, unnormalized. Centering the means
/// spreads cosines across [-1, 1] instead of piling up near 1.
class ToyImageEncoder : public ImageEncoder {
  public:
    static constexpr int kGrid = 4;

    explicit ToyImageEncoder(const EncoderConfig& cfg);
    EmbeddingVector embed(const Image& img) const override;
    int dim() const override { return cfg_.d_joint; }
    uint64_t fingerprint() const override { return w_.fingerprint(); }
    const Tensor& weights() const { return w_; }

  private:
    EncoderConfig cfg_;
    Tensor w_;  // d_joint x (1 + 2 * 3 * kGrid^2)
};

/// Joint tower: both modalities reduce to an n_bands-bin histogram (audio:
/// normalized band powers, uniform for silence; image: luminance histogram),
/// then v = Q h with a shared column-orthonormal Q. Q^T Q = I makes the map an
/// isometry, so cosine in the joint space equals cosine between histograms.
class ToyJointEmbedder : public JointEmbedder {
  public:
    explicit ToyJointEmbedder(const EncoderConfig& cfg);
    EmbeddingVector embed_audio(const AudioClip& clip) const override;
    EmbeddingVector embed_image(const Image& img) const override;
    int dim() const override { return cfg_.d_av; }
    uint64_t fingerprint() const override { return q_.fingerprint(); }
    const Tensor& basis() const { return q_; }

  private:
    EmbeddingVector project(const std::vector<double>& hist) const;

    EncoderConfig cfg_;
    Tensor q_;  // d_av x n_bands, orthonormal columns
};

/// Frozen condition encoder: zero-pads a token block to n_ctx rows, adds a
/// sinusoidal positional table (optional), and runs cond_layers frozen
/// transformer layers. encode_t() yields the sequence the denoiser attends
/// to; project_t() mean-pools an encoded sequence and maps it into the
/// vision-language space (no bias). Differentiable w.r.t. the input tokens;
/// its own weights always bind as constants.
class ConditionEncoder {
  public:
    explicit ConditionEncoder(const EncoderConfig& cfg);

    int n_ctx() const { return cfg_.n_ctx; }
    int width() const { return cfg_.d_cond; }
    int joint_dim() const { return cfg_.d_joint; }

    Var encode_t(Tape& t, Var tokens) const;   ///< tokens: n x d_cond, n <= n_ctx
    Var project_t(Tape& t, Var encoded) const; ///< encoded: n_ctx x d_cond -> 1 x d_joint

    Tensor encode(const Tensor& tokens) const;
    EmbeddingVector project(const Tensor& tokens) const;

    /// Encoding of a single all-zero token; stands in for "no condition".
    const Tensor& null_condition() const { return null_; }

    const ParamStore& params() const { return params_; }
    uint64_t fingerprint() const { return params_.fingerprint(); }

  private:
    EncoderConfig cfg_;
    ParamStore params_;
    Tensor pe_;
    Tensor null_;
};

/// The full frozen stack, built from one config.
struct EncoderSuite {
    EncoderConfig config;
    std::unique_ptr<AudioEncoder> audio;
    std::unique_ptr<ImageEncoder> image;
    std::unique_ptr<JointEmbedder> joint;
    std::unique_ptr<ConditionEncoder> condition;

    static EncoderSuite from_config(const EncoderConfig& cfg);
    uint64_t fingerprint() const;
};

}  // namespace soundedit
