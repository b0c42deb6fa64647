#pragma once

#include "soundedit/media.hpp"

namespace soundedit {

/// Image <-> latent codec boundary. Latents are {h_lat * w_lat, c_lat}
/// matrices (position-major, channel columns) so they drop straight onto the
/// autodiff tape.
struct Autoencoder {
    virtual ~Autoencoder() = default;
    virtual Tensor encode(const Image& img) const = 0;
    virtual Image decode(const Tensor& latent, int h_lat, int w_lat, bool clamp = true) const = 0;
    virtual int factor() const = 0;
    virtual int latent_channels() const = 0;
    virtual uint64_t fingerprint() const = 0;
};

struct AutoencoderConfig {
    int factor = 4;   ///< spatial downsampling per side
    int c_lat = 4;    ///< latent channels
    uint64_t seed = 5;

    void validate() const;
};

/// Linear patch codec: each factor x factor x 3 patch is centered at 0.5 and
/// projected onto c_lat orthonormal basis rows (the first three are exact
/// per-channel means; the rest are seeded and Gram-Schmidt-orthonormalized).
/// Orthonormality makes decode the transpose, so decode(encode(.)) is an
/// orthogonal projection: applying it twice changes nothing, constants
/// reconstruct exactly, and a zero latent decodes to mid-gray.
class ToyAutoencoder : public Autoencoder {
  public:
    explicit ToyAutoencoder(const AutoencoderConfig& cfg);

    Tensor encode(const Image& img) const override;
    Image decode(const Tensor& latent, int h_lat, int w_lat, bool clamp = true) const override;
    int factor() const override { return cfg_.factor; }
    int latent_channels() const override { return cfg_.c_lat; }
    uint64_t fingerprint() const override { return basis_.fingerprint(); }

    const Tensor& basis() const { return basis_; }  // c_lat x (factor^2 * 3)

  private:
    AutoencoderConfig cfg_;
    Tensor basis_;
};

/// 10 log10(1 / mean squared error) between two same-shape images.
double psnr_db(const Image& a, const Image& b);

}  // namespace soundedit
