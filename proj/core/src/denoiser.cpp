#include "soundedit/denoiser.hpp"

#include <cmath>

namespace soundedit {

namespace {

Tensor fan_in_randn(int rows, int cols, RandomStream& rng) {
    return Tensor::randn({rows, cols}, rng, 1.0 / std::sqrt(static_cast<double>(cols)));
}

}  // namespace

void DenoiserConfig::validate() const {
    if (c_lat < 1) throw ConfigError("diffusion.c_lat must be positive");
    if (base_width < 2) throw ConfigError("diffusion.base_width must be at least 2");
    if (d_cond < 2) throw ConfigError("diffusion.d_cond must be at least 2");
    if (temb_dim < 2) throw ConfigError("diffusion.temb_dim must be at least 2");
}

Denoiser::Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    RandomStream rng = RandomStream(cfg_.seed).fork("denoiser");
    const int c = cfg_.c_lat, w0 = cfg_.base_width, w1 = 2 * cfg_.base_width;
    const int td = cfg_.temb_dim, dc = cfg_.d_cond;

    auto add_conv = [&](const std::string& name, int c_out, int c_in, int k) {
        params_.add(name + ".w", fan_in_randn(c_out, k * k * c_in, rng));
        params_.add(name + ".b", Tensor::zeros({1, c_out}));
    };
    auto add_res = [&](const std::string& pre, int c_in, int c_out) {
        params_.add(pre + ".ln1.g", Tensor::full({1, c_in}, 1.0));
        params_.add(pre + ".ln1.b", Tensor::zeros({1, c_in}));
        add_conv(pre + ".conv1", c_out, c_in, 3);
        params_.add(pre + ".temb.w", fan_in_randn(c_out, td, rng));
        params_.add(pre + ".temb.b", Tensor::zeros({1, c_out}));
        params_.add(pre + ".ln2.g", Tensor::full({1, c_out}, 1.0));
        params_.add(pre + ".ln2.b", Tensor::zeros({1, c_out}));
        add_conv(pre + ".conv2", c_out, c_out, 3);
        if (c_in != c_out) params_.add(pre + ".skip.w", fan_in_randn(c_out, c_in, rng));
    };
    auto add_attn = [&](const std::string& pre, int width) {
        params_.add(pre + ".ln.g", Tensor::full({1, width}, 1.0));
        params_.add(pre + ".ln.b", Tensor::zeros({1, width}));
        params_.add(pre + ".wq", fan_in_randn(width, width, rng));
        params_.add(pre + ".wk", fan_in_randn(width, dc, rng));
        params_.add(pre + ".wv", fan_in_randn(width, dc, rng));
        params_.add(pre + ".wo", fan_in_randn(width, width, rng));
    };

    add_conv("unet.in", w0, 2 * c, 3);
    params_.add("unet.temb.w1", fan_in_randn(2 * td, td, rng));
    params_.add("unet.temb.b1", Tensor::zeros({1, 2 * td}));
    params_.add("unet.temb.w2", fan_in_randn(td, 2 * td, rng));
    params_.add("unet.temb.b2", Tensor::zeros({1, td}));

    add_res("unet.enc1.res", w0, w0);
    add_attn("unet.enc1.attn", w0);
    add_conv("unet.down1", w1, w0, 3);
    add_res("unet.enc2.res", w1, w1);
    add_attn("unet.enc2.attn", w1);
    add_conv("unet.down2", w1, w1, 3);
    add_res("unet.mid.res1", w1, w1);
    add_attn("unet.mid.attn", w1);
    add_res("unet.mid.res2", w1, w1);
    add_res("unet.dec1.res", 2 * w1, w1);
    add_attn("unet.dec1.attn", w1);
    add_conv("unet.up2", w0, w1, 3);
    add_res("unet.dec2.res", w1, w0);
    add_conv("unet.out", c, w0, 3);

    // zero output head: a fresh denoiser predicts exactly zero noise
    for (double& v : params_.at("unet.out.w").data) v = 0.0;
}

Var Denoiser::conv(Tape& t, const BoundParams& p, const std::string& prefix, Var x, int h, int w,
                   int c_in, int k, int stride, int pad) const {
    Var cols = t.im2col(x, h, w, c_in, k, stride, pad);
    return linear(t, cols, p.at(prefix + ".w"), p.at(prefix + ".b"));
}

Var Denoiser::res_block(Tape& t, const BoundParams& p, const std::string& prefix, Var x, Var temb,
                        int c_in, int c_out, int h, int w) const {
    Var h1 = t.layer_norm_rows(x, p.at(prefix + ".ln1.g"), p.at(prefix + ".ln1.b"));
    h1 = t.silu(h1);
    h1 = conv(t, p, prefix + ".conv1", h1, h, w, c_in, 3, 1, 1);
    Var tp = linear(t, t.silu(temb), p.at(prefix + ".temb.w"), p.at(prefix + ".temb.b"));
    h1 = t.add_row_vec(h1, tp);
    h1 = t.layer_norm_rows(h1, p.at(prefix + ".ln2.g"), p.at(prefix + ".ln2.b"));
    h1 = t.silu(h1);
    h1 = conv(t, p, prefix + ".conv2", h1, h, w, c_out, 3, 1, 1);
    Var skip = c_in == c_out ? x : linear(t, x, p.at(prefix + ".skip.w"));
    return t.add(skip, h1);
}

Var Denoiser::attn_block(Tape& t, const BoundParams& p, const std::string& prefix, Var x,
                         Var cond) const {
    Var xn = t.layer_norm_rows(x, p.at(prefix + ".ln.g"), p.at(prefix + ".ln.b"));
    Var a = cross_attention(t, xn, cond, p.at(prefix + ".wq"), p.at(prefix + ".wk"),
                            p.at(prefix + ".wv"), p.at(prefix + ".wo"));
    return t.add(x, a);
}

Var Denoiser::forward_t(Tape& t, const BoundParams& p, Var z_concat, int h, int w,
                        double timestep, Var cond) const {
    const Tensor& z = t.val(z_concat);
    if (!z.is_matrix() || z.rows() != h * w || z.cols() != 2 * cfg_.c_lat)
        throw ShapeError("denoiser input must be {h*w, 2*c_lat}, got " + z.shape_str());
    if (h % 4 != 0 || w % 4 != 0)
        throw ShapeError("denoiser needs latent sides divisible by 4");
    if (t.val(cond).cols() != cfg_.d_cond)
        throw ShapeError("condition width mismatch: expected " + std::to_string(cfg_.d_cond));

    Var ts = t.constant(sinusoidal_row(timestep, cfg_.temb_dim));
    Var temb = linear(t, t.silu(linear(t, ts, p.at("unet.temb.w1"), p.at("unet.temb.b1"))),
                      p.at("unet.temb.w2"), p.at("unet.temb.b2"));

    const int c = cfg_.c_lat, w0 = cfg_.base_width, w1 = 2 * cfg_.base_width;
    const int h2 = h / 2, ww2 = w / 2, h4 = h / 4, ww4 = w / 4;

    Var x = conv(t, p, "unet.in", z_concat, h, w, 2 * c, 3, 1, 1);
    Var e1 = attn_block(t, p, "unet.enc1.attn",
                        res_block(t, p, "unet.enc1.res", x, temb, w0, w0, h, w), cond);
    Var x2 = conv(t, p, "unet.down1", e1, h, w, w0, 3, 2, 1);
    Var e2 = attn_block(t, p, "unet.enc2.attn",
                        res_block(t, p, "unet.enc2.res", x2, temb, w1, w1, h2, ww2), cond);
    Var x3 = conv(t, p, "unet.down2", e2, h2, ww2, w1, 3, 2, 1);
    Var m = res_block(t, p, "unet.mid.res1", x3, temb, w1, w1, h4, ww4);
    m = attn_block(t, p, "unet.mid.attn", m, cond);
    m = res_block(t, p, "unet.mid.res2", m, temb, w1, w1, h4, ww4);

    Var u1 = t.concat_cols({t.upsample2x(m, h4, ww4), e2});
    Var d1 = attn_block(t, p, "unet.dec1.attn",
                        res_block(t, p, "unet.dec1.res", u1, temb, 2 * w1, w1, h2, ww2), cond);
    Var u2 = conv(t, p, "unet.up2", t.upsample2x(d1, h2, ww2), h, w, w1, 3, 1, 1);
    Var d2 = res_block(t, p, "unet.dec2.res", t.concat_cols({u2, e1}), temb, w1, w0, h, w);
    return conv(t, p, "unet.out", d2, h, w, w0, 3, 1, 1);
}

Tensor Denoiser::forward(const Tensor& z_concat, int h, int w, double timestep,
                         const Tensor& cond) const {
    Tape t;
    BoundParams p = bind_params(t, params_, false);
    Var out = forward_t(t, p, t.constant(z_concat), h, w, timestep, t.constant(cond));
    return t.val(out);
}

std::vector<std::string> Denoiser::cross_attention_projection_names() const {
    std::vector<std::string> names;
    for (const char* site : {"enc1", "enc2", "mid", "dec1"})
        for (const char* proj : {"wq", "wk", "wv", "wo"})
            names.push_back(std::string("unet.") + site + ".attn." + proj);
    return names;
}

std::vector<std::string> Denoiser::adapter_targetable_names() const {
    std::vector<std::string> names = cross_attention_projection_names();
    for (const auto& [name, tensor] : params_.items) {
        if (tensor.rows() < 2) continue;  // biases and norm scales
        bool already = false;
        for (const auto& n : names) already = already || n == name;
        if (!already) names.push_back(name);
    }
    return names;
}

}  // namespace soundedit
