#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "soundedit/dataset.hpp"

using namespace soundedit;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/soundedit_test_") + name;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

EncoderSuite toy_suite() {
    return EncoderSuite::from_config(EncoderConfig{});
}

std::string reason_id(const std::string& reason) {
    return reason.substr(0, reason.find('='));
}

double hist_mass(const std::vector<double>& hist, int bin) {
    return hist[static_cast<size_t>(bin)];
}

struct FailingClient : PromptClient {
    std::string complete(const std::string&) override {
        throw RetryableError("backend overloaded");
    }
};

struct GarbageClient : PromptClient {
    std::string complete(const std::string&) override { return "no markers here"; }
};

// Fails generation for one specific seed, to exercise skip-and-log.
struct FlakyGenerator : PairGenerator {
    ToyPairGenerator inner;
    int poison_seed;

    FlakyGenerator(ToyWorld w, CategorySet c, int poison)
        : inner(std::move(w), std::move(c)), poison_seed(poison) {}

    std::pair<Image, Image> generate(const PromptPair& pair, int seed) override {
        if (seed == poison_seed) throw NumericError("generator diverged");
        return inner.generate(pair, seed);
    }
};

}  // namespace

TEST_CASE("builtin toy categories are complete and resolvable") {
    CategorySet cats = CategorySet::builtin_toy();
    CHECK(cats.size() == 6);

    std::set<std::string> names;
    std::set<int> lum_bins, tone_bands;
    for (const auto& c : cats.items) {
        CHECK(c.toy);
        CHECK(!c.keywords.empty());
        CHECK(c.subsets == "both");
        CHECK(c.lum_bin >= 2);  // bins 0..1 are reserved for backgrounds
        CHECK(c.lum_bin < 8);
        names.insert(c.name);
        lum_bins.insert(c.lum_bin);
        tone_bands.insert(c.tone_band);
    }
    CHECK(names.size() == 6);
    CHECK(lum_bins.size() == 6);
    CHECK(tone_bands.size() == 6);

    CHECK(cats.by_name("Raining").lum_bin == 3);
    CHECK(cats.find("No such") == nullptr);
    CHECK_THROWS_AS(cats.by_name("No such"), ConfigError);

    const CategoryInfo* by_kw = cats.for_keyword("Downpour");
    REQUIRE(by_kw != nullptr);
    CHECK(by_kw->name == "Raining");
    CHECK(cats.for_keyword("Raining") == by_kw);  // a category's own name matches
    CHECK(cats.for_keyword("Quiet") == nullptr);
}

TEST_CASE("category files load strictly") {
    std::string path = temp_path("cats.json");

    write_text(path, R"({"categories":[
        {"name":"Thunder","keywords":["Lightning strike"],"subsets":"synthetic"},
        {"name":"Raining","keywords":["Downpour"],"toy":{"lum_bin":3,"tone_band":3}}]})");
    CategorySet cats = CategorySet::load(path);
    CHECK(cats.size() == 2);
    CHECK_FALSE(cats.by_name("Thunder").toy);
    CHECK(cats.by_name("Thunder").subsets == "synthetic");
    CHECK(cats.by_name("Raining").toy);
    CHECK(cats.by_name("Raining").tone_band == 3);

    write_text(path, R"({"categories":[{"name":"X","color":"red"}]})");
    CHECK_THROWS_WITH_AS(CategorySet::load(path), doctest::Contains("color"), ConfigError);

    write_text(path, R"({"categories":[],"extra":1})");
    CHECK_THROWS_AS(CategorySet::load(path), ConfigError);

    write_text(path, R"({"categories":[{"name":"A"},{"name":"A"}]})");
    CHECK_THROWS_WITH_AS(CategorySet::load(path), doctest::Contains("duplicate"), ConfigError);

    write_text(path, R"({"categories":[{"keywords":["x"]}]})");
    CHECK_THROWS_AS(CategorySet::load(path), ConfigError);

    write_text(path, R"({"categories":[{"name":"A","subsets":"weekly"}]})");
    CHECK_THROWS_AS(CategorySet::load(path), ConfigError);

    write_text(path, R"({"categories":[{"name":"A","toy":{"lum_bin":2}}]})");
    CHECK_THROWS_AS(CategorySet::load(path), ConfigError);

    write_text(path, "{not json");
    CHECK_THROWS_AS(CategorySet::load(path), IoError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(CategorySet::load(path), IoError);
}

TEST_CASE("toy category audio concentrates in its band") {
    EncoderConfig enc;
    CategorySet cats = CategorySet::builtin_toy();
    for (const auto& cat : cats.items) {
        AudioClip clip = toy_category_audio(cat, enc);
        CHECK(clip.sample_rate == 16000);
        CHECK(static_cast<int>(clip.samples.size()) == 16000);
        std::vector<double> powers =
            band_powers(clip.gained_samples(), clip.sample_rate, enc.n_fft, enc.hop, enc.n_bands);
        double total = std::accumulate(powers.begin(), powers.end(), 0.0);
        REQUIRE(total > 0.0);
        CHECK(powers[cat.tone_band] / total > 0.99);
    }

    const CategoryInfo& cat = cats.items.front();
    AudioClip loud = toy_category_audio(cat, enc, 2.0);
    CHECK(loud.gain == 2.0);
    CHECK(loud.samples == toy_category_audio(cat, enc, 1.0).samples);  // gain stays metadata

    CategoryInfo flat;
    flat.name = "Flat";
    CHECK_THROWS_AS(toy_category_audio(flat, enc), ConfigError);
    CategoryInfo wild = cat;
    wild.tone_band = 99;
    CHECK_THROWS_AS(toy_category_audio(wild, enc), ConfigError);
    CHECK_THROWS_AS(toy_category_audio(cat, enc, 1.0, 0.0), ConfigError);
}

TEST_CASE("template rendering replaces slots exactly") {
    CHECK(render_template("Make {{n}} things", {{"n", "7"}}) == "Make 7 things");
    CHECK(render_template("{{a}}+{{a}}", {{"a", "x"}}) == "x+x");
    CHECK(render_template("no slots", {}) == "no slots");
    CHECK_THROWS_AS(render_template("{{missing}}", {}), ConfigError);
    CHECK_THROWS_AS(render_template("text", {{"unused", "v"}}), ConfigError);
    CHECK_THROWS_AS(render_template("a {{broken", {{"broken", "v"}}), ConfigError);

    PromptTemplates tpl = PromptTemplates::builtin();
    std::string src_req = render_template(tpl.source_request, {{"n", "3"}});
    CHECK(src_req.find("3 new diverse descriptions") != std::string::npos);
    std::string tgt_req = render_template(tpl.target_request,
                                          {{"source", "Sunny city street"}, {"keyword", "Waterlogged"}});
    CHECK(tgt_req.find("- Source : Sunny city street") != std::string::npos);
    CHECK(tgt_req.find("- Keyword : Waterlogged") != std::string::npos);
}

TEST_CASE("template fixtures on disk match the builtin text") {
    PromptTemplates from_disk = PromptTemplates::load(std::string(SOUNDEDIT_DATA_DIR) + "/templates");
    PromptTemplates builtin = PromptTemplates::builtin();
    CHECK(from_disk.source_request == builtin.source_request);
    CHECK(from_disk.target_request == builtin.target_request);
    CHECK_THROWS_AS(PromptTemplates::load("/nonexistent/dir"), IoError);
}

TEST_CASE("toy prompt client splices keywords into sources") {
    ToyPromptClient client;
    PromptTemplates tpl = PromptTemplates::builtin();

    std::vector<PromptPair> pairs =
        generate_prompt_pairs({"Sunny city street"}, {"Waterlogged"}, client, tpl);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].source_prompt == "Sunny city street");
    CHECK(pairs[0].target_prompt == "Waterlogged city street");
    CHECK(pairs[0].keyword == "Waterlogged");
    CHECK(pairs[0].category == "Waterlogged");  // no category set given

    CategorySet cats = CategorySet::builtin_toy();
    pairs = generate_prompt_pairs({"Sunny city street"}, {"Downpour", "Crashing surf"}, client,
                                  tpl, &cats);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].category == "Raining");
    CHECK(pairs[1].category == "Sea waves");
    CHECK(pairs[1].target_prompt == "Crashing surf city street");

    CHECK(generate_prompt_pairs({"a", "b"}, {}, client, tpl).empty());
    CHECK_THROWS_AS(generate_prompt_pairs({"Sunny city street"}, {"Quiet"}, client, tpl, &cats),
                    ConfigError);
}

TEST_CASE("source prompt generation is deterministic and distinct") {
    ToyPromptClient client;
    PromptTemplates tpl = PromptTemplates::builtin();
    std::vector<std::string> a = generate_source_prompts(12, client, tpl);
    std::vector<std::string> b = generate_source_prompts(12, client, tpl);
    CHECK(a == b);
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 12);
    for (const auto& s : a) CHECK(s.rfind("An image of ", 0) == 0);
    CHECK_THROWS_AS(generate_source_prompts(0, client, tpl), ConfigError);
}

TEST_CASE("prompt failures surface as retryable errors with context") {
    PromptTemplates tpl = PromptTemplates::builtin();
    FailingClient failing;
    try {
        generate_prompt_pairs({"Sunny city street"}, {"Downpour"}, failing, tpl);
        FAIL("expected RetryableError");
    } catch (const RetryableError& e) {
        std::string msg = e.what();
        CHECK(msg.find("Sunny city street") != std::string::npos);
        CHECK(msg.find("Downpour") != std::string::npos);
        CHECK(msg.find("backend overloaded") != std::string::npos);
    }

    GarbageClient garbage;
    CHECK_THROWS_AS(generate_prompt_pairs({"Sunny city street"}, {"Downpour"}, garbage, tpl),
                    RetryableError);
    CHECK_THROWS_AS(generate_source_prompts(3, garbage, tpl), RetryableError);
}

TEST_CASE("scene keys tie sources to their spliced targets") {
    CHECK(ToyWorld::scene_key("Sunny city street") == "city street");
    CHECK(ToyWorld::scene_key("word") == "word");

    ToyWorld w;
    int bin = w.source_bin("Sunny city street");
    CHECK(bin >= 0);
    CHECK(bin < w.source_bins);
    CHECK(w.source_bin("Waterlogged city street") == bin);  // splice preserves the scene
}

TEST_CASE("rendered scenes are deterministic and bin-pure") {
    ToyWorld w;
    double bg = w.bin_center(1);
    double fg = w.bin_center(5);

    Image plain = render_scene(w, bg, fg, false, 77, 78);
    Image again = render_scene(w, bg, fg, false, 77, 78);
    CHECK(plain.max_abs_diff(again) == 0.0);
    CHECK(plain.height == w.side);
    CHECK(plain.width == w.side);

    Image other = render_scene(w, bg, fg, false, 79, 78);
    CHECK(other.max_abs_diff(plain) > 0.0);

    for (int y = 0; y < plain.height; ++y)
        for (int x = 0; x < plain.width; ++x) {
            CHECK(plain.at(y, x, 0) == plain.at(y, x, 1));
            CHECK(plain.at(y, x, 1) == plain.at(y, x, 2));
        }

    std::vector<double> hist = image_luminance_histogram(plain, w.n_bins);
    CHECK(hist_mass(hist, 1) == doctest::Approx(1.0).epsilon(1e-12));

    Image with_fg = render_scene(w, bg, fg, true, 77, 78);
    std::vector<double> hist_fg = image_luminance_histogram(with_fg, w.n_bins);
    CHECK(hist_mass(hist_fg, 1) + hist_mass(hist_fg, 5) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hist_mass(hist_fg, 5) > 0.1);  // the effect actually covers pixels
    CHECK(hist_mass(hist_fg, 5) < 0.9);

    CHECK_THROWS_AS(render_scene(w, -0.1, fg, false, 1, 2), ConfigError);
    ToyWorld bad = w;
    bad.structure_amp = 0.2;  // blows the half-bin jitter budget
    CHECK_THROWS_AS(render_scene(bad, bg, fg, false, 1, 2), ConfigError);
}

TEST_CASE("directional similarity matches the canonical render contract") {
    ToyWorld w;
    EncoderSuite suite = toy_suite();
    CategorySet cats = CategorySet::builtin_toy();
    const CategoryInfo& cat = cats.by_name("Raining");

    std::string source = "An image of a harbor at dawn on a sunny day";
    std::string target = "Downpour image of a harbor at dawn on a sunny day";

    EmbeddingVector src_txt = toy_text_embedding(source, nullptr, w, suite);
    EmbeddingVector tgt_txt = toy_text_embedding(target, &cat, w, suite);
    CHECK(src_txt.space == EmbeddingSpace::JOINT_VL);

    // Rebuild the canonical renders from their documented seeds: the image
    // delta then equals the text delta, so the cosine must be exactly 1.
    std::string scene = ToyWorld::scene_key(source);
    double bg = w.bin_center(w.source_bin(source));
    Image src_img = render_scene(w, bg, 0.0, false, fnv1a64(scene + "|structure|canonical"),
                                 fnv1a64(source + "|detail|canonical"));
    Image tgt_img = render_scene(w, bg, w.bin_center(cat.lum_bin), true,
                                 fnv1a64(scene + "|structure|canonical"),
                                 fnv1a64(target + "|detail|canonical"));

    DirectionalResult dir = directional_similarity(src_img, tgt_img, src_txt, tgt_txt, *suite.image);
    CHECK_FALSE(dir.degenerate);
    CHECK(dir.value == doctest::Approx(1.0).epsilon(1e-12));

    DirectionalResult flipped =
        directional_similarity(tgt_img, src_img, src_txt, tgt_txt, *suite.image);
    CHECK(flipped.value == doctest::Approx(-dir.value).epsilon(1e-12));

    DirectionalResult degen = directional_similarity(src_img, src_img, src_txt, tgt_txt, *suite.image);
    CHECK(degen.degenerate);
    CHECK(degen.value == 0.0);
    DirectionalResult degen_txt =
        directional_similarity(src_img, tgt_img, src_txt, src_txt, *suite.image);
    CHECK(degen_txt.degenerate);

    EmbeddingVector wrong_space = src_txt;
    wrong_space.space = EmbeddingSpace::AUDIO;
    CHECK_THROWS_AS(directional_similarity(src_img, tgt_img, wrong_space, tgt_txt, *suite.image),
                    NumericError);
    EmbeddingVector short_txt;
    short_txt.values = Tensor::zeros({1, 4});
    short_txt.space = EmbeddingSpace::JOINT_VL;
    CHECK_THROWS_AS(directional_similarity(src_img, tgt_img, short_txt, tgt_txt, *suite.image),
                    ShapeError);
}

TEST_CASE("pair generator is reproducible and physically grounded") {
    ToyWorld w;
    CategorySet cats = CategorySet::builtin_toy();
    ToyPairGenerator gen(w, cats);
    PromptPair pair{"An image of a forest trail on a clear day",
                    "Downpour image of a forest trail on a clear day", "Downpour", "Raining"};

    auto [before, after] = gen.generate(pair, 42);
    auto [before2, after2] = gen.generate(pair, 42);
    CHECK(before.max_abs_diff(before2) == 0.0);
    CHECK(after.max_abs_diff(after2) == 0.0);

    auto [before3, after3] = gen.generate(pair, 43);
    CHECK(after.max_abs_diff(after3) > 0.0);

    int rain_bin = cats.by_name("Raining").lum_bin;
    std::vector<double> hb = image_luminance_histogram(before, w.n_bins);
    std::vector<double> ha = image_luminance_histogram(after, w.n_bins);
    CHECK(hist_mass(hb, rain_bin) == 0.0);  // no effect before the edit
    CHECK(hist_mass(ha, rain_bin) > 0.1);

    PromptPair foreign{"A scene", "Thunder scene", "Thunder", "Thunderstorm"};
    CHECK_THROWS_AS(gen.generate(foreign, 1), ConfigError);
}

TEST_CASE("synthetic measurements clear the default thresholds") {
    ToyWorld w;
    EncoderSuite suite = toy_suite();
    CategorySet cats = CategorySet::builtin_toy();
    const CategoryInfo& cat = cats.by_name("Raining");
    ToyPairGenerator gen(w, cats);

    std::string source = "An image of a lakeside pier on a bright day";
    std::string target = "Downpour image of a lakeside pier on a bright day";
    PromptPair pair{source, target, "Downpour", cat.name};

    EditTriplet t;
    auto [before, after] = gen.generate(pair, 7);
    t.before = before;
    t.after = after;
    t.audio = toy_category_audio(cat, suite.config);
    t.category = cat.name;

    EmbeddingVector src_txt = toy_text_embedding(source, nullptr, w, suite);
    EmbeddingVector tgt_txt = toy_text_embedding(target, &cat, w, suite);
    FilterMeasurements m = measure_synthetic(t, src_txt, tgt_txt, suite);
    FilterThresholds th;
    CHECK(m.dir_sim >= th.directional_min);
    CHECK(m.iis >= th.iis_min);
    CHECK(m.avs >= th.avs_min);
    CHECK_FALSE(m.degenerate_dir);
    CHECK(filter_synthetic(t, src_txt, tgt_txt, suite, th).keep);

    // Mismatched audio (wrong category tone) must kill the AVS term.
    EditTriplet wrong = t;
    wrong.audio = toy_category_audio(cats.by_name("Volcano explosion"), suite.config);
    FilterMeasurements mw = measure_synthetic(wrong, src_txt, tgt_txt, suite);
    CHECK(mw.avs < th.avs_min);
    CHECK_FALSE(filter_synthetic(wrong, src_txt, tgt_txt, suite, th).keep);
}

TEST_CASE("filter decision table") {
    struct Case {
        const char* label;
        bool synthetic;
        double dir, iis, avs;
        bool degenerate, empty_mask;
        FilterThresholds th;
        bool keep;
        std::vector<std::string> reason_ids;
    };
    FilterThresholds def;
    FilterThresholds strict = def;
    strict.directional_min = 0.5;
    FilterThresholds lax = def;
    lax.directional_min = lax.iis_min = lax.avs_min = -1.0;
    FilterThresholds avs_zero = def;
    avs_zero.avs_min = 0.0;
    FilterThresholds abs_rule = def;
    abs_rule.real_audio_rule = "absolute";

    const std::vector<Case> table = {
        // --- synthetic, default thresholds ---
        {"keep nominal", true, 0.25, 0.8, 0.3, false, false, def, true, {}},
        {"directional fail", true, 0.15, 0.9, 0.9, false, false, def, false, {"directional"}},
        {"iis fail", true, 0.9, 0.65, 0.9, false, false, def, false, {"iis"}},
        {"avs fail", true, 0.9, 0.9, 0.1, false, false, def, false, {"avs"}},
        {"all boundaries keep", true, 0.2, 0.7, 0.2, false, false, def, true, {}},
        {"dir just under", true, 0.199999, 0.7, 0.2, false, false, def, false, {"directional"}},
        {"iis just under", true, 0.2, 0.699999, 0.2, false, false, def, false, {"iis"}},
        {"avs just under", true, 0.2, 0.7, 0.199999, false, false, def, false, {"avs"}},
        {"all three fail", true, 0.1, 0.6, 0.1, false, false, def, false,
         {"directional", "iis", "avs"}},
        {"negative dir", true, -0.5, 0.9, 0.5, false, false, def, false, {"directional"}},
        {"degenerate dir", true, 0.0, 0.9, 0.5, true, false, def, false,
         {"directional_degenerate"}},
        {"degenerate wins over value", true, 0.9, 0.9, 0.5, true, false, def, false,
         {"directional_degenerate"}},
        {"perfect scores", true, 1.0, 1.0, 1.0, false, false, def, true, {}},
        {"stricter directional", true, 0.4, 0.9, 0.9, false, false, strict, false,
         {"directional"}},
        {"zero avs floor", true, 0.25, 0.8, -0.1, false, false, avs_zero, false, {"avs"}},
        {"lax keeps everything", true, -0.9, -0.9, -0.9, false, false, lax, true, {}},
        // --- real, comparative rule ---
        {"real keep", false, 0.1, 0.5, 0.6, false, false, def, true, {}},
        {"real not inpainted", false, 0.1, 0.71, 0.6, false, false, def, false,
         {"not_inpainted"}},
        {"real margin tie discards", false, 0.0, 0.5, 0.6, false, false, def, false,
         {"residual_object"}},
        {"real negative margin", false, -0.2, 0.5, 0.6, false, false, def, false,
         {"residual_object"}},
        {"real iis boundary keeps", false, 0.1, 0.7, 0.6, false, false, def, true, {}},
        {"real double fail", false, -0.1, 0.9, 0.6, false, false, def, false,
         {"not_inpainted", "residual_object"}},
        {"real empty mask", false, 0.0, 1.0, 0.9, false, true, def, false,
         {"no_source_localized"}},
        {"real empty mask overrides good numbers", false, 0.5, 0.5, 0.5, false, true, def, false,
         {"no_source_localized"}},
        {"real tiny positive margin keeps", false, 1e-9, 0.5, 0.6, false, false, def, true, {}},
        // --- real, absolute rule ---
        {"abs keep", false, 0.5, 0.5, 0.6, false, false, abs_rule, true, {}},
        {"abs residual", false, 0.1, 0.5, 0.6, false, false, abs_rule, false,
         {"residual_object"}},
        {"abs boundary keeps", false, 0.4, 0.5, 0.6, false, false, abs_rule, true, {}},
        {"abs double fail", false, 0.1, 0.9, 0.6, false, false, abs_rule, false,
         {"not_inpainted", "residual_object"}},
        {"abs inflated inpainted sim", false, -0.2, 0.5, 0.3, false, false, abs_rule, false,
         {"residual_object"}},
    };
    CHECK(table.size() == 30);

    for (const auto& c : table) {
        CAPTURE(c.label);
        FilterMeasurements m;
        m.dir_sim = c.dir;
        m.iis = c.iis;
        m.avs = c.avs;
        m.degenerate_dir = c.degenerate;
        m.empty_mask = c.empty_mask;
        FilterDecision d = c.synthetic ? decide_synthetic(m, c.th) : decide_real(m, c.th);
        CHECK(d.keep == c.keep);
        CHECK(d.reasons.empty() == d.keep);
        REQUIRE(d.reasons.size() == c.reason_ids.size());
        for (size_t i = 0; i < d.reasons.size(); ++i) CHECK(reason_id(d.reasons[i]) == c.reason_ids[i]);
    }

    // Reason strings carry the measured value in fixed precision.
    FilterMeasurements m;
    m.dir_sim = 0.15;
    m.iis = 0.9;
    m.avs = 0.9;
    CHECK(decide_synthetic(m, def).reasons[0] == "directional=0.150000");
    m.dir_sim = 0.9;
    m.iis = 0.65;
    CHECK(decide_synthetic(m, def).reasons[0] == "iis=0.650000");
}

TEST_CASE("threshold validation") {
    FilterThresholds th;
    CHECK_NOTHROW(th.validate());
    th.directional_min = 1.5;
    CHECK_THROWS_AS(th.validate(), ConfigError);
    th = FilterThresholds{};
    th.real_audio_rule = "sometimes";
    CHECK_THROWS_AS(th.validate(), ConfigError);
    th = FilterThresholds{};
    th.iis_min = std::nan("");
    CHECK_THROWS_AS(th.validate(), ConfigError);
    FilterMeasurements m;
    CHECK_THROWS_AS(decide_synthetic(m, th), ConfigError);
}

TEST_CASE("real branch: dominant object removals survive the filter") {
    ToyWorld w;
    EncoderSuite suite = toy_suite();
    CategorySet cats = CategorySet::builtin_toy();
    FilterThresholds th;
    const CategoryInfo& volcano = cats.by_name("Volcano explosion");
    AudioClip audio = toy_category_audio(volcano, suite.config);

    Image scene = toy_real_scene(w, volcano, 0.8, 10);
    std::vector<double> hist = image_luminance_histogram(scene, w.n_bins);
    CHECK(hist_mass(hist, volcano.lum_bin) > 0.5);  // the object dominates the frame

    FixedBoxLocalizer loc(0.8);
    MeanFillInpainter inp;
    RealBuildResult r = build_real_triplet(scene, audio, volcano.name, loc, inp, suite, th);
    CHECK(r.decision.keep);
    CHECK(r.decision.reasons.empty());
    CHECK(r.measurements.iis < th.real_iis_discard_above);
    CHECK(r.measurements.dir_sim > 0.0);
    CHECK(r.measurements.avs > th.avs_min);
    CHECK(r.triplet.subset == Subset::REAL);
    CHECK(r.triplet.mask_provenance);
    CHECK(r.triplet.after.max_abs_diff(scene) == 0.0);
    CHECK(r.triplet.before.max_abs_diff(scene) > 0.1);  // the object is gone

    // Inpainted frame must no longer sound like the category.
    std::vector<double> hist_inp = image_luminance_histogram(r.triplet.before, w.n_bins);
    CHECK(hist_mass(hist_inp, volcano.lum_bin) < 0.05);
}

TEST_CASE("real branch: failed inpainting and empty masks discard") {
    ToyWorld w;
    EncoderSuite suite = toy_suite();
    CategorySet cats = CategorySet::builtin_toy();
    FilterThresholds th;
    const CategoryInfo& volcano = cats.by_name("Volcano explosion");
    AudioClip audio = toy_category_audio(volcano, suite.config);
    Image scene = toy_real_scene(w, volcano, 0.8, 10);

    // Identity inpainting: image unchanged, iis == 1, margin == 0.
    IdentityInpainter identity;
    FixedBoxLocalizer loc(0.8);
    RealBuildResult r = build_real_triplet(scene, audio, volcano.name, loc, identity, suite, th);
    CHECK_FALSE(r.decision.keep);
    CHECK(r.measurements.iis == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.measurements.dir_sim == doctest::Approx(0.0).epsilon(1e-12));
    REQUIRE(r.decision.reasons.size() == 2);
    CHECK(reason_id(r.decision.reasons[0]) == "not_inpainted");
    CHECK(reason_id(r.decision.reasons[1]) == "residual_object");

    // Empty mask: nothing localized.
    FixedBoxLocalizer nothing(0.0);
    MeanFillInpainter inp;
    RealBuildResult empty = build_real_triplet(scene, audio, volcano.name, nothing, inp, suite, th);
    CHECK_FALSE(empty.decision.keep);
    REQUIRE(empty.decision.reasons.size() == 1);
    CHECK(empty.decision.reasons[0] == "no_source_localized");
    CHECK(empty.measurements.empty_mask);
    CHECK(empty.measurements.iis == 1.0);
    CHECK_FALSE(empty.triplet.mask_provenance);
    CHECK(empty.triplet.before.max_abs_diff(empty.triplet.after) == 0.0);

    CHECK_THROWS_AS(FixedBoxLocalizer(1.5), ConfigError);
    Mask wrong;
    wrong.height = 4;
    wrong.width = 4;
    wrong.on.assign(16, 1);
    CHECK_THROWS_AS(inp.fill(scene, wrong), ShapeError);
    CHECK_THROWS_AS(build_real_triplet(scene, audio, "", loc, inp, suite, th), ConfigError);
}

TEST_CASE("masks count and localize consistently") {
    Image img(16, 16, 0.3);
    FixedBoxLocalizer half(0.5);
    AudioClip silence = make_tone(100.0, 0.0, 1024, 16000);
    Mask m = half.localize(img, silence);
    CHECK(m.height == 16);
    CHECK(m.width == 16);
    CHECK(m.count() == 64);  // an 8x8 centered box
    CHECK_FALSE(m.empty());
    CHECK(m.at(8, 8) == 1);
    CHECK(m.at(0, 0) == 0);

    Mask zero = FixedBoxLocalizer(0.0).localize(img, silence);
    CHECK(zero.empty());
    Mask full = FixedBoxLocalizer(1.0).localize(img, silence);
    CHECK(full.count() == 256);

    MeanFillInpainter inp;
    Image filled = inp.fill(img, full);  // fully masked: falls back to mid-gray
    CHECK(filled.at(3, 3, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("manifest round trip preserves every field") {
    std::string path = temp_path("manifest.jsonl");
    std::vector<ManifestRecord> records(2);
    records[0].before_path = "media/a_before.png";
    records[0].after_path = "media/a_after.png";
    records[0].audio_path = "media/a.wav";
    records[0].category = "Raining";
    records[0].subset = Subset::SYNTHETIC;
    records[0].seed = 12345;
    records[0].dir_sim = 0.123456789012345;
    records[0].iis = 0.987654321098765;
    records[0].avs = 0.5;
    records[0].decision = true;
    records[1] = records[0];
    records[1].subset = Subset::REAL;
    records[1].decision = false;
    records[1].reasons = {"not_inpainted=0.987654", "residual_object=-0.100000"};

    write_manifest(records, path);
    std::vector<ManifestRecord> back = read_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].before_path == records[0].before_path);
    CHECK(back[0].after_path == records[0].after_path);
    CHECK(back[0].audio_path == records[0].audio_path);
    CHECK(back[0].category == records[0].category);
    CHECK(back[0].subset == Subset::SYNTHETIC);
    CHECK(back[0].seed == 12345);
    CHECK(back[0].dir_sim == records[0].dir_sim);  // bit-exact double round trip
    CHECK(back[0].iis == records[0].iis);
    CHECK(back[0].avs == records[0].avs);
    CHECK(back[0].decision);
    CHECK(back[0].reasons.empty());
    CHECK(back[1].subset == Subset::REAL);
    CHECK_FALSE(back[1].decision);
    CHECK(back[1].reasons == records[1].reasons);

    ManifestStats stats = manifest_stats(back);
    CHECK(stats.total == 2);
    CHECK(stats.synthetic == 1);
    CHECK(stats.real == 1);
    CHECK(stats.kept == 1);
    CHECK(stats.discarded == 1);

    std::remove(path.c_str());
}

TEST_CASE("manifest errors name the offending line") {
    std::string path = temp_path("manifest_bad.jsonl");
    std::string good =
        R"({"before_path":"b","after_path":"a","audio_path":"w","category":"c","subset":"synthetic",)"
        R"("seed":1,"dir_sim":0.5,"iis":0.9,"avs":0.4,"decision":true,"reasons":[]})";

    write_text(path, good + "\n{broken\n");
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("line 2"), IoError);

    write_text(path, good + "\n\n" + good + "\n");  // blank lines are tolerated
    CHECK(read_manifest(path).size() == 2);

    std::string unknown = good;
    unknown.insert(unknown.size() - 1, R"(,"extra":1)");
    write_text(path, unknown + "\n");
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("extra"), IoError);

    std::string missing =
        R"({"before_path":"b","after_path":"a","audio_path":"w","category":"c","subset":"synthetic",)"
        R"("seed":1,"dir_sim":0.5,"iis":0.9,"avs":0.4,"decision":true})";
    write_text(path, missing + "\n");
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("reasons"), IoError);

    std::string bad_subset = good;
    size_t pos = bad_subset.find("synthetic");
    bad_subset.replace(pos, 9, "weekly");
    write_text(path, bad_subset + "\n");
    CHECK_THROWS_AS(read_manifest(path), IoError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(read_manifest(path), IoError);
}

TEST_CASE("subset names round trip") {
    CHECK(to_string(Subset::SYNTHETIC) == "synthetic");
    CHECK(to_string(Subset::REAL) == "real");
    CHECK(subset_from_string("synthetic") == Subset::SYNTHETIC);
    CHECK(subset_from_string("real") == Subset::REAL);
    CHECK_THROWS_AS(subset_from_string("imaginary"), ConfigError);
}

TEST_CASE("synthetic build: candidates, determinism, and provenance") {
    EncoderSuite suite = toy_suite();
    SyntheticBuildConfig cfg;
    CHECK(cfg.seeds_per_pair == 5);  // five initial noises per pair by default
    cfg.seeds_per_pair = 2;

    BuildReport rep = build_toy_synthetic_dataset(2, suite, cfg);
    CHECK(rep.records.size() == 2 * 6 * 2);  // sources x categories x seeds
    CHECK(rep.skipped.empty());
    size_t kept_records = 0;
    for (const auto& r : rep.records) kept_records += r.decision ? 1 : 0;
    CHECK(kept_records == rep.kept.size());
    CHECK(rep.kept.size() > 0);

    for (const auto& t : rep.kept) {
        CHECK(t.subset == Subset::SYNTHETIC);
        CHECK(t.p_value == 0.5);
        CHECK_NOTHROW(t.validate());
        CHECK(!t.audio_path.empty());
    }
    std::set<std::string> paths;
    for (const auto& r : rep.records) {
        CHECK(paths.insert(r.before_path).second);  // media paths never collide
        CHECK(paths.insert(r.after_path).second);
        CHECK(r.reasons.empty() == r.decision);
    }

    BuildReport rep2 = build_toy_synthetic_dataset(2, suite, cfg);
    REQUIRE(rep2.records.size() == rep.records.size());
    for (size_t i = 0; i < rep.records.size(); ++i) {
        CHECK(rep2.records[i].before_path == rep.records[i].before_path);
        CHECK(rep2.records[i].seed == rep.records[i].seed);
        CHECK(rep2.records[i].dir_sim == rep.records[i].dir_sim);
        CHECK(rep2.records[i].iis == rep.records[i].iis);
        CHECK(rep2.records[i].avs == rep.records[i].avs);
        CHECK(rep2.records[i].decision == rep.records[i].decision);
    }
    REQUIRE(rep2.kept.size() == rep.kept.size());
    for (size_t i = 0; i < rep.kept.size(); ++i) {
        CHECK(rep2.kept[i].before.max_abs_diff(rep.kept[i].before) == 0.0);
        CHECK(rep2.kept[i].after.max_abs_diff(rep.kept[i].after) == 0.0);
    }

    // Stored measurements re-derive the stored decisions.
    std::vector<FilterDecision> redo = reevaluate_manifest(rep.records, cfg.thresholds);
    REQUIRE(redo.size() == rep.records.size());
    for (size_t i = 0; i < redo.size(); ++i) CHECK(redo[i].keep == rep.records[i].decision);
}

TEST_CASE("synthetic build skips failing candidates and logs them") {
    EncoderSuite suite = toy_suite();
    SyntheticBuildConfig cfg;
    cfg.seeds_per_pair = 2;
    CategorySet cats = CategorySet::builtin_toy();
    ToyPromptClient client;
    PromptTemplates tpl = PromptTemplates::builtin();
    std::vector<std::string> sources = generate_source_prompts(1, client, tpl);
    std::vector<PromptPair> pairs =
        generate_prompt_pairs(sources, {"Downpour", "Rooster call"}, client, tpl, &cats);

    ToyPairGenerator gen(cfg.world, cats);
    BuildReport clean = build_synthetic(pairs, gen, cats, suite, cfg);
    REQUIRE(clean.records.size() == 4);

    FlakyGenerator flaky(cfg.world, cats, clean.records[1].seed);
    BuildReport rep = build_synthetic(pairs, flaky, cats, suite, cfg);
    CHECK(rep.records.size() == 3);
    REQUIRE(rep.skipped.size() == 1);
    CHECK(rep.skipped[0].find("generator diverged") != std::string::npos);
    CHECK(rep.skipped[0].find(std::to_string(clean.records[1].seed)) != std::string::npos);

    // A pair no category can own is skipped whole.
    std::vector<PromptPair> orphan = {{"A scene", "Thunder scene", "Thunder", "Thunderstorm"}};
    BuildReport orep = build_synthetic(orphan, flaky, cats, suite, cfg);
    CHECK(orep.records.empty());
    REQUIRE(orep.skipped.size() == 1);
    CHECK(orep.skipped[0].find("Thunder") != std::string::npos);

    // Encoder bands and luminance bins must agree.
    SyntheticBuildConfig bad = cfg;
    bad.world.n_bins = 4;
    bad.world.source_bins = 2;
    CHECK_THROWS_AS(build_synthetic(pairs, flaky, cats, suite, bad), ConfigError);
}

TEST_CASE("dataset write/load round trip") {
    namespace fs = std::filesystem;
    EncoderSuite suite = toy_suite();
    SyntheticBuildConfig cfg;
    cfg.seeds_per_pair = 2;
    BuildReport rep = build_toy_synthetic_dataset(1, suite, cfg);
    REQUIRE(rep.kept.size() > 0);

    std::string dir = temp_path("dataset_dir");
    fs::remove_all(dir);
    std::string manifest = write_dataset(rep, dir);
    CHECK(fs::exists(manifest));

    std::vector<ManifestRecord> records = read_manifest(manifest);
    CHECK(records.size() == rep.records.size());
    std::vector<FilterDecision> redo = reevaluate_manifest(records, cfg.thresholds);
    for (size_t i = 0; i < redo.size(); ++i) CHECK(redo[i].keep == records[i].decision);

    std::vector<EditTriplet> loaded = load_triplets(manifest, dir);
    REQUIRE(loaded.size() == rep.kept.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].category == rep.kept[i].category);
        CHECK(loaded[i].subset == Subset::SYNTHETIC);
        CHECK(loaded[i].seed == rep.kept[i].seed);
        // PNG is 8-bit and WAV 16-bit; round trips stay within quantization.
        CHECK(loaded[i].before.max_abs_diff(rep.kept[i].before) < 0.5 / 255.0 + 1e-9);
        CHECK(loaded[i].after.max_abs_diff(rep.kept[i].after) < 0.5 / 255.0 + 1e-9);
        REQUIRE(loaded[i].audio.samples.size() == rep.kept[i].audio.samples.size());
        double max_wav = 0.0;
        for (size_t k = 0; k < loaded[i].audio.samples.size(); ++k)
            max_wav = std::max(max_wav,
                               std::abs(loaded[i].audio.samples[k] - rep.kept[i].audio.samples[k]));
        CHECK(max_wav < 1.0 / 32767.0 + 1e-9);
    }

    // Mismatched kept/record bookkeeping is rejected before any file is written.
    BuildReport broken = rep;
    broken.kept.pop_back();
    CHECK_THROWS_AS(write_dataset(broken, dir), ConfigError);

    fs::remove_all(dir);
}

TEST_CASE("config and triplet validation") {
    SyntheticBuildConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.seeds_per_pair = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticBuildConfig{};
    cfg.audio_seconds = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticBuildConfig{};
    cfg.world.side = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticBuildConfig{};
    cfg.world.source_bins = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticBuildConfig{};
    cfg.world.fg_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    EditTriplet t;
    t.before = Image(16, 16, 0.5);
    t.after = Image(16, 16, 0.5);
    t.audio = make_tone(200.0, 0.3, 1024, 16000);
    t.category = "Raining";
    CHECK_NOTHROW(t.validate());
    t.after = Image(16, 20, 0.5);
    CHECK_THROWS_AS(t.validate(), ShapeError);
    t.after = Image(16, 16, 0.5);
    t.category = "";
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t.category = "Raining";
    t.p_value = 1.5;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}
