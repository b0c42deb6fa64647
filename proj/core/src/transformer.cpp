#include "soundedit/transformer.hpp"

#include <cmath>

namespace soundedit {

namespace {

Tensor scaled_randn(int rows, int cols, RandomStream& rng) {
    Tensor w = Tensor::randn({rows, cols}, rng);
    double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : w.data) v *= s;
    return w;
}

}  // namespace

void init_encoder_layer(ParamStore& store, const std::string& prefix, int d, int ffn_mult,
                        RandomStream& rng) {
    if (d < 1 || ffn_mult < 1) throw ConfigError("encoder layer dims must be positive");
    int h = ffn_mult * d;
    store.add(prefix + ".ln1.g", Tensor::full({1, d}, 1.0));
    store.add(prefix + ".ln1.b", Tensor::zeros({1, d}));
    store.add(prefix + ".wq", scaled_randn(d, d, rng));
    store.add(prefix + ".wk", scaled_randn(d, d, rng));
    store.add(prefix + ".wv", scaled_randn(d, d, rng));
    store.add(prefix + ".wo", scaled_randn(d, d, rng));
    store.add(prefix + ".bq", Tensor::zeros({1, d}));
    store.add(prefix + ".bk", Tensor::zeros({1, d}));
    store.add(prefix + ".bv", Tensor::zeros({1, d}));
    store.add(prefix + ".bo", Tensor::zeros({1, d}));
    store.add(prefix + ".ln2.g", Tensor::full({1, d}, 1.0));
    store.add(prefix + ".ln2.b", Tensor::zeros({1, d}));
    store.add(prefix + ".ffn.w1", scaled_randn(h, d, rng));
    store.add(prefix + ".ffn.b1", Tensor::zeros({1, h}));
    store.add(prefix + ".ffn.w2", scaled_randn(d, h, rng));
    store.add(prefix + ".ffn.b2", Tensor::zeros({1, d}));
}

Var encoder_layer_forward(Tape& t, const BoundParams& p, const std::string& prefix, Var x,
                          int d, int heads) {
    if (t.val(x).cols() != d) throw ShapeError("encoder input width mismatch");
    if (heads < 1 || d % heads != 0) throw ShapeError("heads must divide model width");
    int dh = d / heads;

    Var xn = t.layer_norm_rows(x, p.at(prefix + ".ln1.g"), p.at(prefix + ".ln1.b"));
    Var q = linear(t, xn, p.at(prefix + ".wq"), p.at(prefix + ".bq"));
    Var k = linear(t, xn, p.at(prefix + ".wk"), p.at(prefix + ".bk"));
    Var v = linear(t, xn, p.at(prefix + ".wv"), p.at(prefix + ".bv"));

    std::vector<Var> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int i = 0; i < heads; ++i) {
        Var qh = t.slice_cols(q, i * dh, (i + 1) * dh);
        Var kh = t.slice_cols(k, i * dh, (i + 1) * dh);
        Var vh = t.slice_cols(v, i * dh, (i + 1) * dh);
        Var scores = t.scale(t.matmul_op(qh, t.transpose_op(kh)), inv_sqrt);
        Var attn = t.softmax_rows(scores);
        ctx.push_back(t.matmul_op(attn, vh));
    }
    Var merged = heads == 1 ? ctx[0] : t.concat_cols(ctx);
    Var attn_out = linear(t, merged, p.at(prefix + ".wo"), p.at(prefix + ".bo"));
    Var h = t.add(x, attn_out);

    Var hn = t.layer_norm_rows(h, p.at(prefix + ".ln2.g"), p.at(prefix + ".ln2.b"));
    Var f1 = t.gelu(linear(t, hn, p.at(prefix + ".ffn.w1"), p.at(prefix + ".ffn.b1")));
    Var f2 = linear(t, f1, p.at(prefix + ".ffn.w2"), p.at(prefix + ".ffn.b2"));
    return t.add(h, f2);
}

Var cross_attention(Tape& t, Var q_in, Var kv_in, Var wq, Var wk, Var wv, Var wo) {
    int a = t.val(wq).rows();
    if (t.val(wk).rows() != a || t.val(wv).rows() != a || t.val(wo).cols() != a)
        throw ShapeError("attention projection widths disagree");
    Var q = linear(t, q_in, wq);
    Var k = linear(t, kv_in, wk);
    Var v = linear(t, kv_in, wv);
    Var scores = t.scale(t.matmul_op(q, t.transpose_op(k)),
                         1.0 / std::sqrt(static_cast<double>(a)));
    Var attn = t.softmax_rows(scores);
    return linear(t, t.matmul_op(attn, v), wo);
}

Tensor sinusoidal_rows(int n, int d) {
    if (n < 1 || d < 2) throw ShapeError("sinusoidal table needs n >= 1, d >= 2");
    Tensor out = Tensor::zeros({n, d});
    for (int p = 0; p < n; ++p) {
        Tensor row = sinusoidal_row(static_cast<double>(p), d);
        for (int j = 0; j < d; ++j) out.at(p, j) = row.at(0, j);
    }
    return out;
}

Tensor sinusoidal_row(double pos, int d) {
    if (d < 2) throw ShapeError("sinusoidal row needs d >= 2");
    Tensor out = Tensor::zeros({1, d});
    for (int j = 0; j + 1 < d; j += 2) {
        double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(d));
        out.at(0, j) = std::sin(pos * freq);
        out.at(0, j + 1) = std::cos(pos * freq);
    }
    if (d % 2 == 1) {
        double freq = std::pow(10000.0, -static_cast<double>(d - 1) / static_cast<double>(d));
        out.at(0, d - 1) = std::sin(pos * freq);
    }
    return out;
}

}  // namespace soundedit
