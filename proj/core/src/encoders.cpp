#include "soundedit/encoders.hpp"

#include <cmath>

namespace soundedit {

void EncoderConfig::validate() const {
    if (backend.empty()) throw ConfigError("encoders.backend must be non-empty");
    if (d_audio < 1) throw ConfigError("encoders.d_audio must be positive");
    if (d_joint < 1) throw ConfigError("encoders.d_joint must be positive");
    if (d_av < 1) throw ConfigError("encoders.d_av must be positive");
    if (d_cond < 1) throw ConfigError("encoders.d_cond must be positive");
    if (n_ctx < 1) throw ConfigError("encoders.n_ctx must be positive");
    if (cond_layers < 1) throw ConfigError("encoders.cond_layers must be positive");
    if (cond_heads < 1 || d_cond % cond_heads != 0)
        throw ConfigError("encoders.d_cond must be divisible by encoders.cond_heads");
    if (n_bands < 2) throw ConfigError("encoders.n_bands must be at least 2");
    if (d_av < n_bands) throw ConfigError("encoders.d_av must be at least encoders.n_bands");
    if (n_fft < 16) throw ConfigError("encoders.n_fft must be at least 16");
    if (hop < 1) throw ConfigError("encoders.hop must be positive");
}

std::vector<std::pair<int, int>> mel_band_bins(int sample_rate, int n_fft, int n_bands) {
    if (sample_rate < 1) throw ConfigError("sample rate must be positive");
    if (n_fft < 16 || n_bands < 1) throw ConfigError("band layout needs n_fft >= 16, bands >= 1");
    int half = n_fft / 2;
    if (half < n_bands + 1) throw ConfigError("too few DFT bins for requested band count");

    auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto from_mel = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    double lo = to_mel(50.0);
    double hi = to_mel(sample_rate / 2.0);

    std::vector<int> edges(static_cast<size_t>(n_bands) + 1);
    for (int i = 0; i <= n_bands; ++i) {
        double f = from_mel(lo + (hi - lo) * i / n_bands);
        int b = static_cast<int>(std::lround(f * n_fft / sample_rate));
        edges[static_cast<size_t>(i)] = std::min(std::max(b, 1), half);
    }
    for (int i = 1; i <= n_bands; ++i) {
        auto& e = edges[static_cast<size_t>(i)];
        e = std::max(e, edges[static_cast<size_t>(i) - 1] + 1);
    }
    if (edges.back() > half) throw ConfigError("sample rate too low for requested band layout");

    std::vector<std::pair<int, int>> bands(static_cast<size_t>(n_bands));
    for (int i = 0; i < n_bands; ++i)
        bands[static_cast<size_t>(i)] = {edges[static_cast<size_t>(i)],
                                         edges[static_cast<size_t>(i) + 1]};
    return bands;
}

std::vector<double> band_powers(const std::vector<double>& samples, int sample_rate,
                                int n_fft, int hop, int n_bands) {
    if (samples.empty()) throw ShapeError("band_powers: empty sample buffer");
    if (hop < 1) throw ConfigError("band_powers: hop must be positive");
    auto bands = mel_band_bins(sample_rate, n_fft, n_bands);
    int bin_lo = bands.front().first;
    int bin_hi = bands.back().second;

    const int n = n_fft;
    std::vector<double> cos_t(static_cast<size_t>(n)), sin_t(static_cast<size_t>(n));
    for (int m = 0; m < n; ++m) {
        double a = 2.0 * M_PI * m / n;
        cos_t[static_cast<size_t>(m)] = std::cos(a);
        sin_t[static_cast<size_t>(m)] = std::sin(a);
    }

    std::vector<size_t> starts;
    for (size_t s = 0; s + static_cast<size_t>(n) <= samples.size();
         s += static_cast<size_t>(hop))
        starts.push_back(s);
    bool padded = starts.empty();
    if (padded) starts.push_back(0);  // single zero-padded frame

    std::vector<double> bin_power(static_cast<size_t>(bin_hi), 0.0);
    std::vector<double> frame(static_cast<size_t>(n), 0.0);
    const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    for (size_t s : starts) {
        for (int i = 0; i < n; ++i) {
            size_t src = s + static_cast<size_t>(i);
            frame[static_cast<size_t>(i)] = src < samples.size() ? samples[src] : 0.0;
        }
        for (int j = bin_lo; j < bin_hi; ++j) {
            double c = 0.0, q = 0.0;
            int idx = 0;
            for (int i = 0; i < n; ++i) {
                c += frame[static_cast<size_t>(i)] * cos_t[static_cast<size_t>(idx)];
                q += frame[static_cast<size_t>(i)] * sin_t[static_cast<size_t>(idx)];
                idx += j;
                if (idx >= n) idx -= n;
            }
            bin_power[static_cast<size_t>(j)] += (c * c + q * q) * inv_n2;
        }
    }

    std::vector<double> out(static_cast<size_t>(n_bands), 0.0);
    double inv_frames = 1.0 / static_cast<double>(starts.size());
    for (int b = 0; b < n_bands; ++b) {
        auto [blo, bhi] = bands[static_cast<size_t>(b)];
        double acc = 0.0;
        for (int j = blo; j < bhi; ++j) acc += bin_power[static_cast<size_t>(j)];
        out[static_cast<size_t>(b)] = acc * inv_frames / static_cast<double>(bhi - blo);
    }
    return out;
}

std::vector<double> image_luminance_histogram(const Image& img, int n_bins) {
    img.validate();
    if (n_bins < 1) throw ConfigError("histogram needs at least one bin");
    std::vector<double> h(static_cast<size_t>(n_bins), 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double lum = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
            int bin = std::min(n_bins - 1, static_cast<int>(std::floor(lum * n_bins)));
            h[static_cast<size_t>(bin)] += 1.0;
        }
    }
    double total = static_cast<double>(img.height) * img.width;
    for (double& v : h) v /= total;
    return h;
}

// ---- audio tower ----

ToyAudioEncoder::ToyAudioEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int psi_dim = 1 + 2 * cfg_.n_bands;
    RandomStream rng = RandomStream(cfg_.seed).fork("toy_audio");
    w_ = Tensor::randn({cfg_.d_audio, psi_dim}, rng, 1.0 / std::sqrt(static_cast<double>(psi_dim)));
}

EmbeddingVector ToyAudioEncoder::embed(const AudioClip& clip) const {
    clip.validate();
    std::vector<double> s = clip.gained_samples();
    double acc = 0.0;
    for (double v : s) acc += v * v;
    double rms = std::sqrt(acc / static_cast<double>(s.size()));

    std::vector<double> p = band_powers(s, clip.sample_rate, cfg_.n_fft, cfg_.hop, cfg_.n_bands);
    int nb = cfg_.n_bands;
    // Normalize band powers before log-compression: the feature direction then
    // depends only on the spectral shape (gain cancels), while the overall
    // gain survives in the RMS scale applied below.
    double total = 0.0;
    for (int b = 0; b < nb; ++b) total += p[static_cast<size_t>(b)];
    std::vector<double> psi(static_cast<size_t>(1 + 2 * nb), 0.0);
    psi[0] = 1.0;
    double mean_l = 0.0;
    for (int b = 0; b < nb; ++b) {
        double share = total > 0.0 ? p[static_cast<size_t>(b)] / total : 0.0;
        double l = std::log1p(nb * share);
        psi[static_cast<size_t>(1 + b)] = l;
        mean_l += l / nb;
    }
    for (int b = 0; b < nb; ++b)
        psi[static_cast<size_t>(1 + nb + b)] = psi[static_cast<size_t>(1 + b)] - mean_l;

    Tensor v = Tensor::zeros({1, cfg_.d_audio});
    for (int i = 0; i < cfg_.d_audio; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < psi.size(); ++j) dot += w_.at(i, static_cast<int>(j)) * psi[j];
        v.at(0, i) = dot;
    }
    double norm = 0.0;
    for (double x : v.data) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("audio feature projection degenerated");
    double scale = rms / norm;
    for (double& x : v.data) x *= scale;
    return EmbeddingVector(std::move(v), EmbeddingSpace::AUDIO);
}

// ---- image tower ----

ToyImageEncoder::ToyImageEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int psi_dim = 1 + 2 * 3 * kGrid * kGrid;
    RandomStream rng = RandomStream(cfg_.seed).fork("toy_image");
    w_ = Tensor::randn({cfg_.d_joint, psi_dim}, rng, 1.0 / std::sqrt(static_cast<double>(psi_dim)));
}

EmbeddingVector ToyImageEncoder::embed(const Image& img) const {
    img.validate();
    const int g = kGrid;
    const int n_patch = g * g * 3;
    std::vector<double> psi(static_cast<size_t>(1 + 2 * n_patch), 0.0);
    psi[0] = 1.5;
    for (int py = 0; py < g; ++py) {
        int y0 = py * img.height / g, y1 = (py + 1) * img.height / g;
        for (int px = 0; px < g; ++px) {
            int x0 = px * img.width / g, x1 = (px + 1) * img.width / g;
            double count = static_cast<double>(y1 - y0) * (x1 - x0);
            for (int c = 0; c < 3; ++c) {
                double m = 0.0, m2 = 0.0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        double v = img.at(y, x, c);
                        m += v;
                        m2 += v * v;
                    }
                }
                m /= count;
                m2 /= count;
                int slot = (py * g + px) * 3 + c;
                psi[static_cast<size_t>(1 + slot)] = m - 0.5;
                psi[static_cast<size_t>(1 + n_patch + slot)] = std::max(0.0, m2 - m * m);
            }
        }
    }
    Tensor v = Tensor::zeros({1, cfg_.d_joint});
    for (int i = 0; i < cfg_.d_joint; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < psi.size(); ++j) dot += w_.at(i, static_cast<int>(j)) * psi[j];
        v.at(0, i) = dot;
    }
    return EmbeddingVector(std::move(v), EmbeddingSpace::JOINT_VL);
}

// ---- joint tower ----

ToyJointEmbedder::ToyJointEmbedder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    RandomStream rng = RandomStream(cfg_.seed).fork("toy_joint");
    q_ = Tensor::randn({cfg_.d_av, cfg_.n_bands}, rng);
    // modified Gram-Schmidt over columns
    for (int j = 0; j < cfg_.n_bands; ++j) {
        for (int k = 0; k < j; ++k) {
            double dot = 0.0;
            for (int i = 0; i < cfg_.d_av; ++i) dot += q_.at(i, j) * q_.at(i, k);
            for (int i = 0; i < cfg_.d_av; ++i) q_.at(i, j) -= dot * q_.at(i, k);
        }
        double norm = 0.0;
        for (int i = 0; i < cfg_.d_av; ++i) norm += q_.at(i, j) * q_.at(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-8) throw NumericError("joint basis degenerated during orthonormalization");
        for (int i = 0; i < cfg_.d_av; ++i) q_.at(i, j) /= norm;
    }
}

EmbeddingVector ToyJointEmbedder::project(const std::vector<double>& hist) const {
    Tensor v = Tensor::zeros({1, cfg_.d_av});
    for (int i = 0; i < cfg_.d_av; ++i) {
        double dot = 0.0;
        for (int j = 0; j < cfg_.n_bands; ++j) dot += q_.at(i, j) * hist[static_cast<size_t>(j)];
        v.at(0, i) = dot;
    }
    return EmbeddingVector(std::move(v), EmbeddingSpace::JOINT_AV);
}

EmbeddingVector ToyJointEmbedder::embed_audio(const AudioClip& clip) const {
    clip.validate();
    std::vector<double> p =
        band_powers(clip.gained_samples(), clip.sample_rate, cfg_.n_fft, cfg_.hop, cfg_.n_bands);
    double total = 0.0;
    for (double v : p) total += v;
    if (total < 1e-30) {
        std::fill(p.begin(), p.end(), 1.0 / cfg_.n_bands);  // silence -> uniform
    } else {
        for (double& v : p) v /= total;
    }
    return project(p);
}

EmbeddingVector ToyJointEmbedder::embed_image(const Image& img) const {
    return project(image_luminance_histogram(img, cfg_.n_bands));
}

// ---- condition encoder ----

ConditionEncoder::ConditionEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    RandomStream rng = RandomStream(cfg_.seed).fork("toy_condition");
    for (int l = 0; l < cfg_.cond_layers; ++l)
        init_encoder_layer(params_, "layer" + std::to_string(l), cfg_.d_cond, 4, rng);
    params_.add("proj.w", Tensor::randn({cfg_.d_joint, cfg_.d_cond}, rng,
                                        1.0 / std::sqrt(static_cast<double>(cfg_.d_cond))));
    pe_ = sinusoidal_rows(cfg_.n_ctx, cfg_.d_cond);
    null_ = encode(Tensor::zeros({1, cfg_.d_cond}));
}

Var ConditionEncoder::encode_t(Tape& t, Var tokens) const {
    const Tensor& x = t.val(tokens);
    if (!x.is_matrix() || x.cols() != cfg_.d_cond)
        throw ShapeError("condition tokens must be n x d_cond, got " + x.shape_str());
    if (x.rows() > cfg_.n_ctx)
        throw ShapeError("token count " + std::to_string(x.rows()) + " exceeds context length " +
                         std::to_string(cfg_.n_ctx));
    Var seq = tokens;
    if (x.rows() < cfg_.n_ctx) {
        Var pad = t.constant(Tensor::zeros({cfg_.n_ctx - x.rows(), cfg_.d_cond}));
        seq = t.concat_rows({tokens, pad});
    }
    if (cfg_.positional_encoding) seq = t.add(seq, t.constant(pe_));
    BoundParams bp = bind_params(t, params_, false);
    for (int l = 0; l < cfg_.cond_layers; ++l)
        seq = encoder_layer_forward(t, bp, "layer" + std::to_string(l), seq, cfg_.d_cond,
                                    cfg_.cond_heads);
    return seq;
}

Var ConditionEncoder::project_t(Tape& t, Var encoded) const {
    const Tensor& e = t.val(encoded);
    if (!e.is_matrix() || e.rows() != cfg_.n_ctx || e.cols() != cfg_.d_cond)
        throw ShapeError("projection expects an encoded n_ctx x d_cond sequence, got " +
                         e.shape_str());
    Var pooled = t.mean_rows(encoded);
    Var w = t.constant(params_.at("proj.w"));
    return linear(t, pooled, w);
}

Tensor ConditionEncoder::encode(const Tensor& tokens) const {
    Tape t;
    Var out = encode_t(t, t.constant(tokens));
    return t.val(out);
}

EmbeddingVector ConditionEncoder::project(const Tensor& tokens) const {
    Tape t;
    Var out = project_t(t, encode_t(t, t.constant(tokens)));
    return EmbeddingVector(t.val(out), EmbeddingSpace::JOINT_VL);
}

// ---- suite ----

EncoderSuite EncoderSuite::from_config(const EncoderConfig& cfg) {
    cfg.validate();
    if (cfg.backend != "toy")
        throw ConfigError("unknown encoder backend: \"" + cfg.backend + "\" (available: toy)");
    EncoderSuite s;
    s.config = cfg;
    s.audio = std::make_unique<ToyAudioEncoder>(cfg);
    s.image = std::make_unique<ToyImageEncoder>(cfg);
    s.joint = std::make_unique<ToyJointEmbedder>(cfg);
    s.condition = std::make_unique<ConditionEncoder>(cfg);
    return s;
}

uint64_t EncoderSuite::fingerprint() const {
    uint64_t parts[4] = {audio->fingerprint(), image->fingerprint(), joint->fingerprint(),
                         condition->fingerprint()};
    return fnv1a64(parts, sizeof(parts));
}

}  // namespace soundedit
