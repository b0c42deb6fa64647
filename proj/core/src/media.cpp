#include "soundedit/media.hpp"

#include <cmath>

namespace soundedit {

Image::Image(int h, int w, double fill) : height(h), width(w), channels(3) {
    pixels.assign(static_cast<size_t>(h) * w * 3, fill);
}

void Image::validate() const {
    if (channels != 3) throw ShapeError("Image: expected 3 channels, got " + std::to_string(channels));
    if (height < 8 || width < 8)
        throw ShapeError("Image: minimum side is 8 px, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    if (pixels.size() != static_cast<size_t>(height) * width * channels)
        throw ShapeError("Image: pixel buffer size mismatch");
    for (double v : pixels) {
        if (!std::isfinite(v)) throw NumericError("Image: non-finite pixel value");
        if (v < 0.0 || v > 1.0) throw NumericError("Image: pixel value outside [0, 1]");
    }
}

Tensor Image::to_tensor() const {
    Tensor t;
    t.shape = {height * width, channels};
    t.data = pixels;
    return t;
}

Image Image::from_tensor(const Tensor& t, int h, int w, bool clamp) {
    if (t.size() != static_cast<int64_t>(h) * w * 3) throw ShapeError("Image::from_tensor: size mismatch");
    Image img(h, w);
    img.pixels = t.data;
    if (clamp) {
        for (auto& v : img.pixels) v = std::min(1.0, std::max(0.0, v));
    }
    return img;
}

double Image::max_abs_diff(const Image& other) const {
    if (height != other.height || width != other.width)
        throw ShapeError("Image::max_abs_diff: dimension mismatch");
    double m = 0.0;
    for (size_t i = 0; i < pixels.size(); ++i) m = std::max(m, std::fabs(pixels[i] - other.pixels[i]));
    return m;
}

void AudioClip::validate() const {
    if (samples.empty()) throw ShapeError("AudioClip: samples must be non-empty");
    if (sample_rate <= 0) throw ShapeError("AudioClip: sample rate must be positive");
    if (!(gain >= 0.0) || !std::isfinite(gain)) throw NumericError("AudioClip: gain must be finite and >= 0");
    for (double s : samples)
        if (!std::isfinite(s)) throw NumericError("AudioClip: non-finite sample");
}

std::vector<double> AudioClip::gained_samples() const {
    std::vector<double> out(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        out[i] = std::min(1.0, std::max(-1.0, samples[i] * gain));
    return out;
}

double AudioClip::duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
}

AudioClip make_tone(double freq_hz, double amplitude, int n_samples, int sample_rate, double phase) {
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(static_cast<size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i)
        clip.samples[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * i / sample_rate + phase);
    return clip;
}

}  // namespace soundedit
