#pragma once

#include <string>
#include <vector>

#include "soundedit/tensor.hpp"

namespace soundedit {

/// RGB image, channel-last, values in [0, 1]. Minimum side 8 px.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> pixels;  // (y * width + x) * channels + c

    Image() = default;
    Image(int h, int w, double fill = 0.0);

    double& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }

    void validate() const;  ///< throws ShapeError / NumericError on contract violation
    Tensor to_tensor() const;  ///< shape {h*w, 3}
    static Image from_tensor(const Tensor& t, int h, int w, bool clamp = true);

    double max_abs_diff(const Image& other) const;
};

/// Mono audio clip. `gain` is applied (then clamped to [-1, 1]) by
/// gained_samples(); raw samples are stored unscaled.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;
    double gain = 1.0;

    void validate() const;
    std::vector<double> gained_samples() const;
    double duration_seconds() const;
};

/// Pure tone: amplitude * sin(2*pi*freq*t), n samples at sample_rate.
AudioClip make_tone(double freq_hz, double amplitude, int n_samples, int sample_rate,
                    double phase = 0.0);

// ---- file I/O ----
// PNG: 8-bit, RGB / RGBA (alpha dropped) / gray (expanded). Deterministic
// writer settings so identical images produce identical bytes.
Image read_png(const std::string& path);
void write_png(const Image& img, const std::string& path);

// WAV: 16-bit PCM; multi-channel inputs are averaged to mono on read.
AudioClip read_wav(const std::string& path);
void write_wav(const AudioClip& clip, const std::string& path);

}  // namespace soundedit
