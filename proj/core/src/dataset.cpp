#include "soundedit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace soundedit {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Value of the last "<marker> ... : value" line in `text`, trimmed; empty when
// the marker is missing or its line carries no colon.
std::string last_field(const std::string& text, const std::string& marker) {
    size_t pos = text.rfind(marker);
    if (pos == std::string::npos) return "";
    size_t eol = text.find('\n', pos);
    size_t colon = text.find(':', pos + marker.size());
    if (colon == std::string::npos || (eol != std::string::npos && colon > eol)) return "";
    size_t end = text.find('\n', colon);
    return trim(end == std::string::npos ? text.substr(colon + 1)
                                         : text.substr(colon + 1, end - colon - 1));
}

// "Sunny city street" + "Waterlogged" -> "Waterlogged city street".
std::string splice_keyword(const std::string& source, const std::string& keyword) {
    std::string rest = ToyWorld::scene_key(source);
    return rest.empty() || rest == source ? keyword : keyword + " " + rest;
}

std::string reason_entry(const std::string& id, double measured) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.6f", id.c_str(), measured);
    return buf;
}

std::string slugify(const std::string& s) {
    std::string out;
    for (char ch : s) {
        unsigned char u = static_cast<unsigned char>(ch);
        out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
    }
    return out;
}

int scene_bin(const ToyWorld& w, const std::string& scene) {
    return static_cast<int>(fnv1a64(scene) % static_cast<uint64_t>(w.source_bins));
}

// Recover the underlying scene of a target prompt by peeling the spliced
// keyword (or the category name) off the front; multi-word keywords make the
// plain leading-word rule insufficient. Falls back to that rule.
std::string target_scene_key(const std::string& prompt, const CategoryInfo& cat) {
    std::vector<std::string> markers = cat.keywords;
    markers.push_back(cat.name);
    std::sort(markers.begin(), markers.end(),
              [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    for (const auto& m : markers) {
        if (m.empty() || prompt.size() <= m.size() + 1) continue;
        if (prompt.compare(0, m.size(), m) == 0 && prompt[m.size()] == ' ') {
            std::string rest = trim(prompt.substr(m.size() + 1));
            if (!rest.empty()) return rest;
        }
    }
    return ToyWorld::scene_key(prompt);
}

struct BoxBounds {
    int y0, y1, x0, x1;
};

BoxBounds box_bounds(int height, int width, double fraction) {
    int bh = std::clamp(static_cast<int>(std::lround(height * fraction)), 0, height);
    int bw = std::clamp(static_cast<int>(std::lround(width * fraction)), 0, width);
    int y0 = (height - bh) / 2;
    int x0 = (width - bw) / 2;
    return {y0, y0 + bh, x0, x0 + bw};
}

// Sum of n random plane-wave cosines, normalized to [-1, 1].
struct WaveField {
    struct Wave {
        double fx, fy, phase;
    };
    std::vector<Wave> waves;

    WaveField(RandomStream& rs, int n, double f_lo, double f_hi) {
        waves.reserve(n);
        for (int i = 0; i < n; ++i) {
            Wave w;
            w.fx = f_lo + (f_hi - f_lo) * rs.uniform();
            w.fy = f_lo + (f_hi - f_lo) * rs.uniform();
            w.phase = 2.0 * kPi * rs.uniform();
            waves.push_back(w);
        }
    }

    double at(double u, double v) const {
        double s = 0.0;
        for (const auto& w : waves) s += std::cos(2.0 * kPi * (w.fx * u + w.fy * v) + w.phase);
        return s / static_cast<double>(waves.size());
    }
};

}  // namespace

// ============================ categories ============================

CategorySet CategorySet::builtin_toy() {
    CategorySet set;
    auto add = [&](std::string name, std::vector<std::string> keywords, int bin) {
        CategoryInfo c;
        c.name = std::move(name);
        c.keywords = std::move(keywords);
        c.toy = true;
        c.lum_bin = bin;
        c.tone_band = bin;
        set.items.push_back(std::move(c));
    };
    add("Stream burbling", {"Babbling brook", "Flowing stream", "Trickling water"}, 2);
    add("Raining", {"Downpour", "Heavy rain", "Rain shower"}, 3);
    add("Sea waves", {"Crashing surf", "Rolling waves", "Ocean swell"}, 4);
    add("Chicken crowing", {"Rooster call", "Crowing rooster"}, 5);
    add("Fireworks banging", {"Bursting fireworks", "Festival fireworks"}, 6);
    add("Volcano explosion", {"Erupting volcano", "Lava burst"}, 7);
    return set;
}

CategorySet CategorySet::load(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open category file: " + json_path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw IoError("category file " + json_path + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("category file root must be an object");
    for (const auto& item : root.items())
        if (item.key() != "categories")
            throw ConfigError("category file: unknown key \"" + item.key() + "\"");
    if (!root.contains("categories") || !root["categories"].is_array())
        throw ConfigError("category file: missing \"categories\" array");

    CategorySet set;
    std::set<std::string> seen;
    for (const auto& j : root["categories"]) {
        if (!j.is_object()) throw ConfigError("category entries must be objects");
        CategoryInfo c;
        for (const auto& item : j.items()) {
            const std::string& key = item.key();
            if (key != "name" && key != "keywords" && key != "subsets" && key != "toy")
                throw ConfigError("category \"" + j.value("name", std::string("?")) +
                                  "\": unknown key \"" + key + "\"");
        }
        c.name = j.value("name", std::string());
        if (c.name.empty()) throw ConfigError("category with empty or missing name");
        if (!seen.insert(c.name).second) throw ConfigError("duplicate category \"" + c.name + "\"");
        if (j.contains("keywords")) {
            if (!j["keywords"].is_array())
                throw ConfigError("category \"" + c.name + "\": keywords must be an array");
            for (const auto& k : j["keywords"]) c.keywords.push_back(k.get<std::string>());
        }
        if (j.contains("subsets")) c.subsets = j["subsets"].get<std::string>();
        if (c.subsets != "synthetic" && c.subsets != "real" && c.subsets != "both")
            throw ConfigError("category \"" + c.name + "\": bad subsets \"" + c.subsets + "\"");
        if (j.contains("toy")) {
            const auto& t = j["toy"];
            if (!t.is_object()) throw ConfigError("category \"" + c.name + "\": toy must be an object");
            for (const auto& item : t.items())
                if (item.key() != "lum_bin" && item.key() != "tone_band")
                    throw ConfigError("category \"" + c.name + "\": unknown toy key \"" +
                                      item.key() + "\"");
            if (!t.contains("lum_bin") || !t.contains("tone_band"))
                throw ConfigError("category \"" + c.name + "\": toy needs lum_bin and tone_band");
            c.toy = true;
            c.lum_bin = t["lum_bin"].get<int>();
            c.tone_band = t["tone_band"].get<int>();
            if (c.lum_bin < 0 || c.tone_band < 0)
                throw ConfigError("category \"" + c.name + "\": toy bins must be non-negative");
        }
        set.items.push_back(std::move(c));
    }
    return set;
}

const CategoryInfo* CategorySet::find(const std::string& name) const {
    for (const auto& c : items)
        if (c.name == name) return &c;
    return nullptr;
}

const CategoryInfo& CategorySet::by_name(const std::string& name) const {
    const CategoryInfo* c = find(name);
    if (!c) throw ConfigError("unknown category \"" + name + "\"");
    return *c;
}

const CategoryInfo* CategorySet::for_keyword(const std::string& keyword) const {
    for (const auto& c : items) {
        if (c.name == keyword) return &c;
        for (const auto& k : c.keywords)
            if (k == keyword) return &c;
    }
    return nullptr;
}

AudioClip toy_category_audio(const CategoryInfo& cat, const EncoderConfig& enc, double gain,
                             double seconds, int sample_rate) {
    if (!cat.toy) throw ConfigError("category \"" + cat.name + "\" has no toy audio signature");
    auto bands = mel_band_bins(sample_rate, enc.n_fft, enc.n_bands);
    if (cat.tone_band < 0 || cat.tone_band >= static_cast<int>(bands.size()))
        throw ConfigError("category \"" + cat.name + "\": tone band " +
                          std::to_string(cat.tone_band) + " out of range");
    if (seconds <= 0.0) throw ConfigError("toy_category_audio: seconds must be positive");
    auto [lo, hi] = bands[cat.tone_band];
    int bin = (lo + hi) / 2;
    double freq = bin * static_cast<double>(sample_rate) / enc.n_fft;
    int n = std::max(enc.n_fft, static_cast<int>(std::lround(seconds * sample_rate)));
    AudioClip clip = make_tone(freq, 0.35, n, sample_rate);
    clip.gain = gain;
    return clip;
}

// ============================ prompts ============================

void PromptPair::validate() const {
    if (source_prompt.empty()) throw ConfigError("prompt pair: empty source prompt");
    if (target_prompt.empty()) throw ConfigError("prompt pair: empty target prompt");
    if (keyword.empty()) throw ConfigError("prompt pair: empty keyword");
}

std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& slots) {
    std::string out;
    std::set<std::string> used;
    size_t i = 0;
    while (i < text.size()) {
        size_t open = text.find("{{", i);
        if (open == std::string::npos) {
            out += text.substr(i);
            break;
        }
        out += text.substr(i, open - i);
        size_t close = text.find("}}", open + 2);
        if (close == std::string::npos) throw ConfigError("template: unterminated {{ placeholder");
        std::string key = text.substr(open + 2, close - open - 2);
        auto it = slots.find(key);
        if (it == slots.end()) throw ConfigError("template: no value for placeholder {{" + key + "}}");
        out += it->second;
        used.insert(key);
        i = close + 2;
    }
    for (const auto& [key, value] : slots)
        if (!used.count(key)) throw ConfigError("template: unused slot \"" + key + "\"");
    return out;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
    auto read_file = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open template file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    PromptTemplates tpl;
    tpl.source_request = read_file(dir + "/source_prompts.txt");
    tpl.target_request = read_file(dir + "/target_prompt.txt");
    return tpl;
}

PromptTemplates PromptTemplates::builtin() {
    PromptTemplates tpl;
    tpl.source_request =
        "Example : An image of a city street on a sunny day\n"
        "Make {{n}} new diverse descriptions following the example above.\n"
        "The themes are diverse, and the weather is mostly sunny.\n";
    tpl.target_request =
        "- Source : The marketplace had fruit stands with people busy in their routines.\n"
        "- Keyword : thunder\n"
        "- Target : The marketplace had fruit stands with people busy in their routines,"
        " with lightning in the sky.\n"
        "\n"
        "By referencing the example above, write a ``target'' for the ``keyword'' below.\n"
        "The ``target'' should describe the scene after a visual event corresponding to\n"
        "the ``keyword'' occurs in the ``source'' scene.\n"
        "\n"
        "- Source : {{source}}\n"
        "- Keyword : {{keyword}}\n"
        "- Target :\n";
    return tpl;
}

std::string ToyPromptClient::complete(const std::string& request) {
    if (request.find("- Source") != std::string::npos) {
        std::string source = last_field(request, "- Source");
        std::string keyword = last_field(request, "- Keyword");
        if (source.empty() || keyword.empty())
            throw RetryableError("prompt request is missing its source or keyword field");
        return "- Keyword : " + keyword + "\n- Target : " + splice_keyword(source, keyword) + "\n";
    }
    if (request.find("descriptions") != std::string::npos) {
        size_t make = request.find("Make ");
        if (make == std::string::npos)
            throw RetryableError("source prompt request has no description count");
        int n = 0;
        try {
            n = std::stoi(request.substr(make + 5));
        } catch (const std::exception&) {
            throw RetryableError("source prompt request has an unreadable description count");
        }
        if (n <= 0) throw RetryableError("source prompt request asked for no descriptions");
        static const char* kPlaces[12] = {
            "a city street",      "a harbor at dawn",        "a mountain village",
            "a desert highway",   "a forest trail",          "a lakeside pier",
            "an old castle courtyard", "a train station platform", "a wheat field",
            "a coastal cliff",    "a river bridge",          "a botanical garden"};
        static const char* kWeather[4] = {"sunny", "bright", "clear", "cloudy"};
        std::string out;
        for (int i = 0; i < n; ++i) {
            std::string line = std::string("An image of ") + kPlaces[i % 12] + " on a " +
                               kWeather[(i + i / 12) % 4] + " day";
            if (i >= 48) line += " no. " + std::to_string(i + 1);
            out += line + "\n";
        }
        return out;
    }
    throw RetryableError("unrecognized prompt request");
}

std::vector<std::string> generate_source_prompts(int n, PromptClient& client,
                                                 const PromptTemplates& tpl) {
    if (n <= 0) throw ConfigError("generate_source_prompts: n must be positive");
    std::string request = render_template(tpl.source_request, {{"n", std::to_string(n)}});
    std::string reply = client.complete(request);
    std::vector<std::string> lines;
    std::istringstream ss(reply);
    std::string line;
    while (std::getline(ss, line)) {
        line = trim(line);
        if (!line.empty()) lines.push_back(line);
    }
    if (static_cast<int>(lines.size()) < n)
        throw RetryableError("source prompt request returned " + std::to_string(lines.size()) +
                             " of " + std::to_string(n) + " descriptions");
    lines.resize(n);
    return lines;
}

std::vector<PromptPair> generate_prompt_pairs(const std::vector<std::string>& sources,
                                              const std::vector<std::string>& keywords,
                                              PromptClient& client, const PromptTemplates& tpl,
                                              const CategorySet* categories) {
    std::vector<PromptPair> pairs;
    pairs.reserve(sources.size() * keywords.size());
    for (const auto& source : sources) {
        for (const auto& keyword : keywords) {
            std::string category = keyword;
            if (categories) {
                const CategoryInfo* cat = categories->for_keyword(keyword);
                if (!cat) throw ConfigError("keyword \"" + keyword + "\" matches no category");
                category = cat->name;
            }
            std::string target;
            try {
                std::string request = render_template(
                    tpl.target_request, {{"source", source}, {"keyword", keyword}});
                target = last_field(client.complete(request), "- Target");
            } catch (const std::exception& e) {
                throw RetryableError("prompt client failed for source \"" + source +
                                     "\", keyword \"" + keyword + "\": " + e.what());
            }
            if (target.empty())
                throw RetryableError("prompt client returned no target for source \"" + source +
                                     "\", keyword \"" + keyword + "\"");
            PromptPair pair{source, target, keyword, category};
            pair.validate();
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

// ============================ toy rendering ============================

std::string ToyWorld::scene_key(const std::string& prompt) {
    size_t sp = prompt.find(' ');
    if (sp == std::string::npos) return prompt;
    std::string rest = trim(prompt.substr(sp + 1));
    return rest.empty() ? prompt : rest;
}

int ToyWorld::source_bin(const std::string& prompt) const {
    return scene_bin(*this, scene_key(prompt));
}

void ToyWorld::validate() const {
    if (side < 8 || side % 4 != 0)
        throw ConfigError("toy world: side must be >= 8 and divisible by 4");
    if (n_bins < 2) throw ConfigError("toy world: n_bins must be >= 2");
    if (source_bins < 1 || source_bins > n_bins)
        throw ConfigError("toy world: source_bins must lie in [1, n_bins]");
    if (!std::isfinite(fg_threshold) || fg_threshold <= -1.0 || fg_threshold >= 1.0)
        throw ConfigError("toy world: fg_threshold must lie inside (-1, 1)");
    if (structure_amp < 0.0 || detail_amp < 0.0)
        throw ConfigError("toy world: jitter amplitudes must be non-negative");
    if (structure_amp + detail_amp >= 0.5 / n_bins)
        throw ConfigError("toy world: jitter budget exceeds half a luminance bin");
}

Image render_scene(const ToyWorld& w, double bg_lum, double fg_lum, bool with_fg,
                   uint64_t structure_seed, uint64_t detail_seed) {
    w.validate();
    if (bg_lum < 0.0 || bg_lum > 1.0 || fg_lum < 0.0 || fg_lum > 1.0)
        throw ConfigError("render_scene: luminance levels must lie in [0, 1]");
    RandomStream rs(structure_seed);
    WaveField selector(rs, 3, 0.5, 3.5);
    WaveField wiggle(rs, 3, 1.0, 4.0);
    RandomStream rd(detail_seed);
    WaveField detail(rd, 3, 3.0, 8.0);

    Image img(w.side, w.side);
    for (int y = 0; y < w.side; ++y) {
        for (int x = 0; x < w.side; ++x) {
            double u = (x + 0.5) / w.side;
            double v = (y + 0.5) / w.side;
            double base = (with_fg && selector.at(u, v) > w.fg_threshold) ? fg_lum : bg_lum;
            double lum = base + w.structure_amp * wiggle.at(u, v) + w.detail_amp * detail.at(u, v);
            lum = std::clamp(lum, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = lum;
        }
    }
    return img;
}

EmbeddingVector toy_text_embedding(const std::string& prompt, const CategoryInfo* category,
                                   const ToyWorld& world, const EncoderSuite& suite) {
    if (prompt.empty()) throw ConfigError("toy_text_embedding: empty prompt");
    if (category && !category->toy)
        throw ConfigError("toy_text_embedding: category \"" + category->name + "\" is not toy");
    std::string scene =
        category ? target_scene_key(prompt, *category) : ToyWorld::scene_key(prompt);
    uint64_t structure = fnv1a64(scene + "|structure|canonical");
    uint64_t detail = fnv1a64(prompt + "|detail|canonical");
    double bg = world.bin_center(scene_bin(world, scene));
    Image canonical = category
        ? render_scene(world, bg, world.bin_center(category->lum_bin), true, structure, detail)
        : render_scene(world, bg, 0.0, false, structure, detail);
    return suite.image->embed(canonical);
}

ToyPairGenerator::ToyPairGenerator(ToyWorld world, CategorySet categories)
    : world_(std::move(world)), categories_(std::move(categories)) {
    world_.validate();
}

std::pair<Image, Image> ToyPairGenerator::generate(const PromptPair& pair, int seed) {
    pair.validate();
    const CategoryInfo* cat = categories_.find(pair.category);
    if (!cat) cat = categories_.for_keyword(pair.keyword);
    if (!cat || !cat->toy)
        throw ConfigError("no toy renderer for category \"" + pair.category + "\"");
    if (cat->lum_bin < 0 || cat->lum_bin >= world_.n_bins)
        throw ConfigError("category \"" + cat->name + "\": luminance bin out of range");

    std::string scene = ToyWorld::scene_key(pair.source_prompt);
    uint64_t structure = fnv1a64(scene + "|structure|" + std::to_string(seed));
    uint64_t detail_before = fnv1a64(pair.source_prompt + "|detail|" + std::to_string(seed));
    uint64_t detail_after = fnv1a64(pair.target_prompt + "|detail|" + std::to_string(seed));
    double bg = world_.bin_center(world_.source_bin(pair.source_prompt));
    Image before = render_scene(world_, bg, 0.0, false, structure, detail_before);
    Image after = render_scene(world_, bg, world_.bin_center(cat->lum_bin), true, structure,
                               detail_after);
    return {std::move(before), std::move(after)};
}

// ============================ triplets & filtering ============================

std::string to_string(Subset s) {
    return s == Subset::SYNTHETIC ? "synthetic" : "real";
}

Subset subset_from_string(const std::string& s) {
    if (s == "synthetic") return Subset::SYNTHETIC;
    if (s == "real") return Subset::REAL;
    throw ConfigError("unknown subset \"" + s + "\"");
}

void EditTriplet::validate() const {
    before.validate();
    after.validate();
    if (before.height != after.height || before.width != after.width)
        throw ShapeError("triplet: before/after image sizes differ");
    audio.validate();
    if (category.empty()) throw ConfigError("triplet: empty category");
    if (!(p_value >= 0.0 && p_value <= 1.0)) throw ConfigError("triplet: p_value outside [0, 1]");
}

void FilterThresholds::validate() const {
    auto check = [](const char* name, double v) {
        if (!std::isfinite(v) || v < -1.0 || v > 1.0)
            throw ConfigError(std::string("thresholds: ") + name + " must lie in [-1, 1]");
    };
    check("directional_min", directional_min);
    check("iis_min", iis_min);
    check("avs_min", avs_min);
    check("real_iis_discard_above", real_iis_discard_above);
    if (real_audio_rule != "comparative" && real_audio_rule != "absolute")
        throw ConfigError("thresholds: real_audio_rule must be comparative or absolute");
}

FilterDecision decide_synthetic(const FilterMeasurements& m, const FilterThresholds& th) {
    th.validate();
    FilterDecision d;
    if (m.degenerate_dir)
        d.reasons.push_back(reason_entry("directional_degenerate", m.dir_sim));
    else if (m.dir_sim < th.directional_min)
        d.reasons.push_back(reason_entry("directional", m.dir_sim));
    if (m.iis < th.iis_min) d.reasons.push_back(reason_entry("iis", m.iis));
    if (m.avs < th.avs_min) d.reasons.push_back(reason_entry("avs", m.avs));
    d.keep = d.reasons.empty();
    return d;
}

FilterDecision decide_real(const FilterMeasurements& m, const FilterThresholds& th) {
    th.validate();
    FilterDecision d;
    if (m.empty_mask) {
        d.reasons.push_back("no_source_localized");
        return d;
    }
    if (m.iis > th.real_iis_discard_above) d.reasons.push_back(reason_entry("not_inpainted", m.iis));
    if (th.real_audio_rule == "comparative") {
        // dir_sim holds sim(audio, original) - sim(audio, inpainted); a
        // non-positive margin means the inpainted frame still sounds right.
        if (m.dir_sim <= 0.0) d.reasons.push_back(reason_entry("residual_object", m.dir_sim));
    } else {
        double sim_inpainted = m.avs - m.dir_sim;
        if (sim_inpainted > th.avs_min)
            d.reasons.push_back(reason_entry("residual_object", sim_inpainted));
    }
    d.keep = d.reasons.empty();
    return d;
}

DirectionalResult directional_similarity(const Image& src_img, const Image& tgt_img,
                                         const EmbeddingVector& src_txt,
                                         const EmbeddingVector& tgt_txt,
                                         const ImageEncoder& image_encoder) {
    if (src_txt.space != EmbeddingSpace::JOINT_VL || tgt_txt.space != EmbeddingSpace::JOINT_VL)
        throw NumericError("directional_similarity: text embeddings must live in " +
                           to_string(EmbeddingSpace::JOINT_VL));
    EmbeddingVector a = image_encoder.embed(src_img);
    EmbeddingVector b = image_encoder.embed(tgt_img);
    if (a.values.size() != src_txt.values.size() || a.values.size() != tgt_txt.values.size())
        throw ShapeError("directional_similarity: embedding dimensions differ");

    double dot = 0.0, n_img = 0.0, n_txt = 0.0;
    for (int64_t i = 0; i < a.values.size(); ++i) {
        double di = b.values.data[i] - a.values.data[i];
        double dt = tgt_txt.values.data[i] - src_txt.values.data[i];
        dot += di * dt;
        n_img += di * di;
        n_txt += dt * dt;
    }
    if (n_img < 1e-24 || n_txt < 1e-24) return {0.0, true};
    return {dot / (std::sqrt(n_img) * std::sqrt(n_txt)), false};
}

FilterMeasurements measure_synthetic(const EditTriplet& t, const EmbeddingVector& src_txt,
                                     const EmbeddingVector& tgt_txt, const EncoderSuite& suite) {
    t.validate();
    FilterMeasurements m;
    DirectionalResult dir = directional_similarity(t.before, t.after, src_txt, tgt_txt, *suite.image);
    m.dir_sim = dir.value;
    m.degenerate_dir = dir.degenerate;
    m.iis = cosine_similarity(suite.image->embed(t.before), suite.image->embed(t.after));
    m.avs = cosine_similarity(suite.joint->embed_audio(t.audio), suite.joint->embed_image(t.after));
    return m;
}

FilterDecision filter_synthetic(const EditTriplet& t, const EmbeddingVector& src_txt,
                                const EmbeddingVector& tgt_txt, const EncoderSuite& suite,
                                const FilterThresholds& th) {
    return decide_synthetic(measure_synthetic(t, src_txt, tgt_txt, suite), th);
}

// ============================ real-data branch ============================

int Mask::count() const {
    return static_cast<int>(std::count_if(on.begin(), on.end(), [](uint8_t v) { return v != 0; }));
}

FixedBoxLocalizer::FixedBoxLocalizer(double fraction) : fraction_(fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw ConfigError("localizer: fraction must lie in [0, 1]");
}

Mask FixedBoxLocalizer::localize(const Image& img, const AudioClip& audio) const {
    img.validate();
    (void)audio;
    Mask mask;
    mask.height = img.height;
    mask.width = img.width;
    mask.on.assign(static_cast<size_t>(img.height) * img.width, 0);
    BoxBounds b = box_bounds(img.height, img.width, fraction_);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) mask.at(y, x) = 1;
    return mask;
}

Image MeanFillInpainter::fill(const Image& img, const Mask& mask) const {
    img.validate();
    if (mask.height != img.height || mask.width != img.width)
        throw ShapeError("inpainter: mask size does not match the image");
    double sum[3] = {0.0, 0.0, 0.0};
    int64_t n = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (mask.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) sum[c] += img.at(y, x, c);
            ++n;
        }
    }
    double mean[3];
    for (int c = 0; c < 3; ++c) mean[c] = n > 0 ? sum[c] / n : 0.5;
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = mean[c];
    return out;
}

Image IdentityInpainter::fill(const Image& img, const Mask& mask) const {
    img.validate();
    if (mask.height != img.height || mask.width != img.width)
        throw ShapeError("inpainter: mask size does not match the image");
    return img;
}

Image toy_real_scene(const ToyWorld& w, const CategoryInfo& cat, double box_fraction,
                     uint64_t seed) {
    if (!cat.toy) throw ConfigError("category \"" + cat.name + "\" has no toy renderer");
    if (!(box_fraction >= 0.0 && box_fraction <= 1.0))
        throw ConfigError("toy_real_scene: box_fraction must lie in [0, 1]");
    if (cat.lum_bin < 0 || cat.lum_bin >= w.n_bins)
        throw ConfigError("category \"" + cat.name + "\": luminance bin out of range");
    uint64_t structure = fnv1a64(cat.name + "|real-structure|" + std::to_string(seed));
    uint64_t detail = fnv1a64(cat.name + "|real-detail|" + std::to_string(seed));
    double bg = w.bin_center(static_cast<int>(seed % static_cast<uint64_t>(w.source_bins)));

    Image img = render_scene(w, bg, 0.0, false, structure, detail);
    ToyWorld all_fg = w;
    all_fg.fg_threshold = -0.999;  // the selector field never drops this low
    Image object = render_scene(all_fg, bg, w.bin_center(cat.lum_bin), true, structure, detail);
    BoxBounds b = box_bounds(w.side, w.side, box_fraction);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = object.at(y, x, c);
    return img;
}

RealBuildResult build_real_triplet(const Image& img, const AudioClip& audio,
                                   const std::string& category, const Localizer& loc,
                                   const Inpainter& inp, const EncoderSuite& suite,
                                   const FilterThresholds& th) {
    img.validate();
    audio.validate();
    if (category.empty()) throw ConfigError("build_real_triplet: empty category");

    RealBuildResult r;
    r.triplet.after = img;
    r.triplet.audio = audio;
    r.triplet.category = category;
    r.triplet.subset = Subset::REAL;

    Mask mask = loc.localize(img, audio);
    if (mask.height != img.height || mask.width != img.width)
        throw ShapeError("build_real_triplet: localizer mask size mismatch");

    EmbeddingVector audio_joint = suite.joint->embed_audio(audio);
    double sim_original = cosine_similarity(audio_joint, suite.joint->embed_image(img));

    if (mask.empty()) {
        // Nothing to remove: record the untouched frame so a numbers-only
        // re-evaluation of the manifest reaches the same discard.
        r.triplet.before = img;
        r.measurements.empty_mask = true;
        r.measurements.iis = 1.0;
        r.measurements.avs = sim_original;
        r.measurements.dir_sim = 0.0;
        r.decision = decide_real(r.measurements, th);
        return r;
    }

    Image inpainted = inp.fill(img, mask);
    r.triplet.before = inpainted;
    r.triplet.mask_provenance = true;
    r.measurements.iis =
        cosine_similarity(suite.image->embed(inpainted), suite.image->embed(img));
    r.measurements.avs = sim_original;
    r.measurements.dir_sim =
        sim_original - cosine_similarity(audio_joint, suite.joint->embed_image(inpainted));
    r.decision = decide_real(r.measurements, th);
    return r;
}

// ============================ manifest ============================

namespace {

const std::set<std::string>& manifest_keys() {
    static const std::set<std::string> keys = {
        "before_path", "after_path", "audio_path", "category", "subset", "seed",
        "dir_sim",     "iis",        "avs",        "decision", "reasons"};
    return keys;
}

ManifestRecord record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw IoError("record is not an object");
    for (const auto& item : j.items())
        if (!manifest_keys().count(item.key()))
            throw IoError("unknown field \"" + item.key() + "\"");
    for (const auto& key : manifest_keys())
        if (!j.contains(key)) throw IoError("missing field \"" + key + "\"");

    ManifestRecord r;
    r.before_path = j.at("before_path").get<std::string>();
    r.after_path = j.at("after_path").get<std::string>();
    r.audio_path = j.at("audio_path").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.subset = subset_from_string(j.at("subset").get<std::string>());
    r.seed = j.at("seed").get<int>();
    r.dir_sim = j.at("dir_sim").get<double>();
    r.iis = j.at("iis").get<double>();
    r.avs = j.at("avs").get<double>();
    r.decision = j.at("decision").get<bool>();
    for (const auto& reason : j.at("reasons")) r.reasons.push_back(reason.get<std::string>());
    return r;
}

}  // namespace

void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    for (const auto& r : records) {
        nlohmann::json j{{"before_path", r.before_path},
                         {"after_path", r.after_path},
                         {"audio_path", r.audio_path},
                         {"category", r.category},
                         {"subset", to_string(r.subset)},
                         {"seed", r.seed},
                         {"dir_sim", r.dir_sim},
                         {"iis", r.iis},
                         {"avs", r.avs},
                         {"decision", r.decision},
                         {"reasons", r.reasons}};
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("failed writing manifest: " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::vector<ManifestRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

ManifestStats manifest_stats(const std::vector<ManifestRecord>& records) {
    ManifestStats s;
    s.total = static_cast<int64_t>(records.size());
    for (const auto& r : records) {
        (r.subset == Subset::SYNTHETIC ? s.synthetic : s.real) += 1;
        (r.decision ? s.kept : s.discarded) += 1;
    }
    return s;
}

std::vector<FilterDecision> reevaluate_manifest(const std::vector<ManifestRecord>& records,
                                                const FilterThresholds& th) {
    std::vector<FilterDecision> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        FilterMeasurements m;
        m.dir_sim = r.dir_sim;
        m.iis = r.iis;
        m.avs = r.avs;
        out.push_back(r.subset == Subset::SYNTHETIC ? decide_synthetic(m, th)
                                                    : decide_real(m, th));
    }
    return out;
}

// ============================ builder ============================

void SyntheticBuildConfig::validate() const {
    if (seeds_per_pair < 1) throw ConfigError("build config: seeds_per_pair must be >= 1");
    if (!(audio_seconds > 0.0)) throw ConfigError("build config: audio_seconds must be positive");
    thresholds.validate();
    world.validate();
}

BuildReport build_synthetic(const std::vector<PromptPair>& pairs, PairGenerator& gen,
                            const CategorySet& cats, const EncoderSuite& suite,
                            const SyntheticBuildConfig& cfg) {
    cfg.validate();
    if (suite.config.n_bands != cfg.world.n_bins)
        throw ConfigError("build config: encoder band count differs from toy luminance bins");

    BuildReport rep;
    int pair_idx = 0;
    for (const auto& pair : pairs) {
        int idx = pair_idx++;
        const CategoryInfo* cat = cats.find(pair.category);
        if (!cat) cat = cats.for_keyword(pair.keyword);
        if (!cat) {
            rep.skipped.push_back("pair " + std::to_string(idx) + ": no category for keyword \"" +
                                  pair.keyword + "\"");
            continue;
        }

        AudioClip audio;
        EmbeddingVector src_txt, tgt_txt;
        try {
            pair.validate();
            audio = toy_category_audio(*cat, suite.config, 1.0, cfg.audio_seconds);
            src_txt = toy_text_embedding(pair.source_prompt, nullptr, cfg.world, suite);
            tgt_txt = toy_text_embedding(pair.target_prompt, cat, cfg.world, suite);
        } catch (const std::exception& e) {
            rep.skipped.push_back("pair " + std::to_string(idx) + ": " + e.what());
            continue;
        }

        std::string slug = slugify(cat->name);
        std::string audio_path = "media/audio_" + slug + ".wav";
        RandomStream rs = RandomStream(cfg.seed).fork(pair.source_prompt + "|" + pair.keyword);
        for (int i = 0; i < cfg.seeds_per_pair; ++i) {
            int seed = rs.uniform_int(0, 1 << 30);
            EditTriplet t;
            FilterMeasurements m;
            try {
                auto [before, after] = gen.generate(pair, seed);
                t.before = std::move(before);
                t.after = std::move(after);
                t.audio = audio;
                t.audio_path = audio_path;
                t.category = cat->name;
                t.subset = Subset::SYNTHETIC;
                t.seed = seed;
                t.p_value = gen.p_value();
                m = measure_synthetic(t, src_txt, tgt_txt, suite);
            } catch (const std::exception& e) {
                rep.skipped.push_back("pair " + std::to_string(idx) + " seed " +
                                      std::to_string(seed) + ": " + e.what());
                continue;
            }
            FilterDecision d = decide_synthetic(m, cfg.thresholds);

            ManifestRecord r;
            std::string stem =
                "media/syn_" + slug + "_" + std::to_string(idx) + "_" + std::to_string(seed);
            r.before_path = stem + "_before.png";
            r.after_path = stem + "_after.png";
            r.audio_path = audio_path;
            r.category = cat->name;
            r.subset = Subset::SYNTHETIC;
            r.seed = seed;
            r.dir_sim = m.dir_sim;
            r.iis = m.iis;
            r.avs = m.avs;
            r.decision = d.keep;
            r.reasons = d.reasons;
            rep.records.push_back(std::move(r));
            if (d.keep) rep.kept.push_back(std::move(t));
        }
    }
    return rep;
}

BuildReport build_toy_synthetic_dataset(int sources, const EncoderSuite& suite,
                                        const SyntheticBuildConfig& cfg) {
    CategorySet cats = CategorySet::builtin_toy();
    ToyPromptClient client;
    PromptTemplates tpl = PromptTemplates::builtin();
    std::vector<std::string> srcs = generate_source_prompts(sources, client, tpl);
    std::vector<std::string> keywords;
    for (const auto& c : cats.items) keywords.push_back(c.keywords.front());
    std::vector<PromptPair> pairs = generate_prompt_pairs(srcs, keywords, client, tpl, &cats);
    ToyPairGenerator gen(cfg.world, cats);
    return build_synthetic(pairs, gen, cats, suite, cfg);
}

std::string write_dataset(const BuildReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    size_t kept_records = 0;
    for (const auto& r : report.records) kept_records += r.decision ? 1 : 0;
    if (kept_records != report.kept.size())
        throw ConfigError("build report: kept triplets do not match kept records");

    std::error_code ec;
    fs::create_directories(fs::path(dir) / "media", ec);
    if (ec) throw IoError("cannot create dataset directory: " + dir);

    size_t k = 0;
    std::map<std::string, const AudioClip*> audio_files;
    for (const auto& r : report.records) {
        if (!r.decision) continue;
        const EditTriplet& t = report.kept[k++];
        write_png(t.before, (fs::path(dir) / r.before_path).string());
        write_png(t.after, (fs::path(dir) / r.after_path).string());
        if (!r.audio_path.empty()) audio_files.emplace(r.audio_path, &t.audio);
    }
    for (const auto& [path, clip] : audio_files)
        write_wav(*clip, (fs::path(dir) / path).string());

    std::string manifest = (fs::path(dir) / "manifest.jsonl").string();
    write_manifest(report.records, manifest);
    return manifest;
}

std::vector<EditTriplet> load_triplets(const std::string& manifest_path, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<ManifestRecord> records = read_manifest(manifest_path);
    std::map<std::string, AudioClip> audio_cache;
    std::vector<EditTriplet> out;
    for (const auto& r : records) {
        if (!r.decision) continue;
        EditTriplet t;
        t.before = read_png((fs::path(dir) / r.before_path).string());
        t.after = read_png((fs::path(dir) / r.after_path).string());
        auto it = audio_cache.find(r.audio_path);
        if (it == audio_cache.end())
            it = audio_cache.emplace(r.audio_path, read_wav((fs::path(dir) / r.audio_path).string()))
                     .first;
        t.audio = it->second;
        t.audio_path = r.audio_path;
        t.category = r.category;
        t.subset = r.subset;
        t.seed = r.seed;
        t.validate();
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace soundedit
