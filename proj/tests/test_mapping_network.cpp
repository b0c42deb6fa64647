#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "soundedit/mapping_network.hpp"
#include "support/testing.hpp"

using namespace soundedit;
using sdtest::check_gradients;

namespace {

MappingConfig tiny_config() {
    MappingConfig cfg;
    cfg.d_audio = 3;
    cfg.d_token = 4;
    cfg.n_tokens = 2;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST_CASE("mapping network shapes and determinism") {
    MappingConfig cfg;  // defaults: 16 -> 5 x 24
    MappingNetwork net(cfg);

    RandomStream rng(3);
    Tensor audio = Tensor::randn({1, cfg.d_audio}, rng, 0.3);
    Tensor out = net.forward(audio);
    CHECK(out.rows() == cfg.n_tokens);
    CHECK(out.cols() == cfg.d_token);
    CHECK(out.all_finite());

    // same seed, fresh instance -> identical parameters and outputs
    MappingNetwork net2(cfg);
    CHECK(net.fingerprint() == net2.fingerprint());
    CHECK(net.forward(audio).fingerprint() == out.fingerprint());

    // the audio input actually matters
    Tensor other = Tensor::randn({1, cfg.d_audio}, rng, 0.3);
    CHECK(net.forward(other).fingerprint() != out.fingerprint());

    // a single-token head is legal
    MappingConfig one = cfg;
    one.n_tokens = 1;
    CHECK(MappingNetwork(one).forward(audio).rows() == 1);
}

TEST_CASE("mapping network rejects invalid configuration and inputs") {
    MappingConfig bad;
    bad.n_tokens = 0;
    CHECK_THROWS_AS(MappingNetwork{bad}, ConfigError);

    MappingConfig odd;
    odd.d_token = 10;
    odd.n_heads = 4;
    CHECK_THROWS_AS(MappingNetwork{odd}, ConfigError);

    MappingNetwork net{MappingConfig{}};
    RandomStream rng(4);
    CHECK_THROWS_AS(net.forward(Tensor::randn({2, 16}, rng)), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor::randn({1, 15}, rng)), ShapeError);
}

TEST_CASE("learnable token bank initializes near zero and is trainable") {
    MappingConfig cfg;
    MappingNetwork net(cfg);
    const Tensor& tokens = net.params().at("map.tokens");
    CHECK(tokens.rows() == cfg.n_tokens);
    CHECK(tokens.max_abs() < 0.2);  // N(0, 0.02) initialization stays tiny

    // one backward pass: the token bank and input projection receive gradient
    Tape t;
    BoundParams p = bind_params(t, net.params(), true);
    RandomStream rng(9);
    Var audio = t.constant(Tensor::randn({1, cfg.d_audio}, rng, 0.5));
    Var loss = t.mean_all(t.square(net.forward_t(t, p, audio)));
    t.backward(loss);

    auto grads = collect_grads(t, net.params(), p);
    double token_g = 0.0, inw_g = 0.0, total = 0.0;
    for (const auto& [name, g] : grads) {
        total += g.max_abs();
        if (name == "map.tokens") token_g = g.max_abs();
        if (name == "map.in.w") inw_g = g.max_abs();
    }
    CHECK(token_g > 0.0);
    CHECK(inw_g > 0.0);
    CHECK(total > 0.0);
}

TEST_CASE("mapping network gradients match finite differences end to end") {
    MappingConfig cfg = tiny_config();
    MappingNetwork net(cfg);

    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (const auto& [name, tensor] : net.params().items) {
        names.push_back(name);
        inputs.push_back(tensor);
    }
    RandomStream rng(17);
    inputs.push_back(Tensor::randn({1, cfg.d_audio}, rng, 0.7));

    check_gradients(inputs, [&](Tape& t, const std::vector<Var>& vs) {
        BoundParams bp;
        for (size_t i = 0; i < names.size(); ++i) bp.vars[names[i]] = vs[i];
        Var audio = vs.back();
        Var out = net.forward_t(t, bp, audio);
        // weighted sum so no gradient component is structurally zero
        Tensor wgt(Shape{cfg.n_tokens, cfg.d_token});
        for (int64_t i = 0; i < wgt.size(); ++i) wgt[i] = 0.3 + 0.1 * static_cast<double>(i);
        return t.sum_all(t.mul(out, t.constant(wgt)));
    }, 1e-5, 2e-4);
}

TEST_CASE("parameter count covers projection, tokens, layers, and final norm") {
    MappingConfig cfg = tiny_config();
    MappingNetwork net(cfg);
    int d = cfg.d_token, h = cfg.ffn_mult * d;
    int64_t layer = 2 * d + 4 * d * d + 4 * d + 2 * d + (h * d + h) + (d * h + d);
    int64_t want = (d * cfg.d_audio + d) + cfg.n_tokens * d + cfg.n_layers * layer + 2 * d;
    CHECK(net.parameter_count() == want);
}
