#include "soundedit/autoencoder.hpp"

#include <cmath>

namespace soundedit {

void AutoencoderConfig::validate() const {
    if (factor < 1) throw ConfigError("autoencoder.factor must be positive");
    int patch = factor * factor * 3;
    if (c_lat < 1 || c_lat > patch)
        throw ConfigError("autoencoder.c_lat must be in [1, factor^2 * 3]");
}

ToyAutoencoder::ToyAutoencoder(const AutoencoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int f = cfg_.factor;
    const int patch = f * f * 3;  // patch vector layout: (py * f + px) * 3 + channel
    RandomStream rng = RandomStream(cfg_.seed).fork("toy_autoencoder");
    basis_ = Tensor::zeros({cfg_.c_lat, patch});

    // first rows: exact per-channel means (unit-norm indicator rows)
    int mean_rows = std::min(cfg_.c_lat, 3);
    double unit = 1.0 / std::sqrt(static_cast<double>(f * f));
    for (int c = 0; c < mean_rows; ++c)
        for (int p = 0; p < f * f; ++p) basis_.at(c, p * 3 + c) = unit;

    // remaining rows: seeded, orthonormalized against everything before
    for (int r = mean_rows; r < cfg_.c_lat; ++r) {
        for (int j = 0; j < patch; ++j) basis_.at(r, j) = rng.normal();
        for (int k = 0; k < r; ++k) {
            double dot = 0.0;
            for (int j = 0; j < patch; ++j) dot += basis_.at(r, j) * basis_.at(k, j);
            for (int j = 0; j < patch; ++j) basis_.at(r, j) -= dot * basis_.at(k, j);
        }
        double norm = 0.0;
        for (int j = 0; j < patch; ++j) norm += basis_.at(r, j) * basis_.at(r, j);
        norm = std::sqrt(norm);
        if (norm < 1e-8) throw NumericError("autoencoder basis degenerated");
        for (int j = 0; j < patch; ++j) basis_.at(r, j) /= norm;
    }
}

Tensor ToyAutoencoder::encode(const Image& img) const {
    img.validate();
    const int f = cfg_.factor;
    if (img.height % f != 0 || img.width % f != 0)
        throw ShapeError("encode: image sides must be divisible by the downsampling factor");
    int hl = img.height / f, wl = img.width / f;
    Tensor out = Tensor::zeros({hl * wl, cfg_.c_lat});
    std::vector<double> patch(static_cast<size_t>(f * f * 3));
    for (int y = 0; y < hl; ++y) {
        for (int x = 0; x < wl; ++x) {
            for (int py = 0; py < f; ++py)
                for (int px = 0; px < f; ++px)
                    for (int c = 0; c < 3; ++c)
                        patch[static_cast<size_t>((py * f + px) * 3 + c)] =
                            img.at(y * f + py, x * f + px, c) - 0.5;
            for (int r = 0; r < cfg_.c_lat; ++r) {
                double dot = 0.0;
                for (size_t j = 0; j < patch.size(); ++j)
                    dot += basis_.at(r, static_cast<int>(j)) * patch[j];
                out.at(y * wl + x, r) = dot;
            }
        }
    }
    return out;
}

Image ToyAutoencoder::decode(const Tensor& latent, int h_lat, int w_lat, bool clamp) const {
    if (!latent.is_matrix() || latent.rows() != h_lat * w_lat || latent.cols() != cfg_.c_lat)
        throw ShapeError("decode: latent must be {h_lat * w_lat, c_lat}, got " +
                         latent.shape_str());
    const int f = cfg_.factor;
    Image img(h_lat * f, w_lat * f, 0.0);
    for (int y = 0; y < h_lat; ++y) {
        for (int x = 0; x < w_lat; ++x) {
            for (int py = 0; py < f; ++py) {
                for (int px = 0; px < f; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        int j = (py * f + px) * 3 + c;
                        double v = 0.5;
                        for (int r = 0; r < cfg_.c_lat; ++r)
                            v += basis_.at(r, j) * latent.at(y * w_lat + x, r);
                        if (clamp) v = std::min(1.0, std::max(0.0, v));
                        img.at(y * f + py, x * f + px, c) = v;
                    }
                }
            }
        }
    }
    return img;
}

double psnr_db(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw ShapeError("psnr: size mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        double d = a.pixels[i] - b.pixels[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.pixels.size());
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace soundedit
