#pragma once

#include <map>

#include "soundedit/encoders.hpp"

namespace soundedit {

// ============================ categories ============================

/// One sound category. Toy categories carry the physics of the toy world:
/// their rendered effect occupies luminance-histogram bin `lum_bin` and their
/// signature tone occupies spectral band `tone_band`, which is what makes the
/// audio-visual similarity discriminative at desk scale.
struct CategoryInfo {
    std::string name;
    std::vector<std::string> keywords;
    std::string subsets = "both";  ///< "synthetic" | "real" | "both"
    bool toy = false;
    int lum_bin = -1;
    int tone_band = -1;
};

struct CategorySet {
    std::vector<CategoryInfo> items;

    /// Six categories with full toy physics, no files needed.
    static CategorySet builtin_toy();
    /// Full list from a JSON fixture; unknown keys and bad bins are errors.
    static CategorySet load(const std::string& json_path);

    const CategoryInfo* find(const std::string& name) const;
    const CategoryInfo& by_name(const std::string& name) const;  ///< ConfigError if missing
    /// Match a keyword (or a category's own name) to its category.
    const CategoryInfo* for_keyword(const std::string& keyword) const;
    size_t size() const { return items.size(); }
};

/// Signature tone for a toy category: a pure tone at the center DFT bin of the
/// category's spectral band, so the whole clip's band energy lands in exactly
/// that band.
AudioClip toy_category_audio(const CategoryInfo& cat, const EncoderConfig& enc,
                             double gain = 1.0, double seconds = 1.0,
                             int sample_rate = 16000);

// ============================ prompts ============================

struct PromptPair {
    std::string source_prompt;
    std::string target_prompt;
    std::string keyword;
    std::string category;

    void validate() const;
};

/// Text-completion boundary. `complete` receives a fully rendered request
/// (one of the two shipped templates with its slots filled) and returns the
/// model's reply; failures should raise RetryableError.
struct PromptClient {
    virtual ~PromptClient() = default;
    virtual std::string complete(const std::string& request) = 0;
};

/// Replace {{key}} placeholders. Unknown keys in `slots` and unreplaced
/// placeholders left in the text are both configuration errors.
std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& slots);

/// The two request templates used for prompt generation.
struct PromptTemplates {
    std::string source_request;  ///< slot: {{n}}
    std::string target_request;  ///< slots: {{source}}, {{keyword}}

    /// Load source_prompts.txt / target_prompt.txt from a fixture directory.
    static PromptTemplates load(const std::string& dir);
    /// Embedded copies of the same text, for file-free tests.
    static PromptTemplates builtin();
};

/// Deterministic stand-in for the language model: source requests yield stock
/// scene descriptions; target requests splice the keyword in place of the
/// source's leading word ("Sunny city street" + "Waterlogged" ->
/// "Waterlogged city street").
class ToyPromptClient : public PromptClient {
  public:
    std::string complete(const std::string& request) override;
};

std::vector<std::string> generate_source_prompts(int n, PromptClient& client,
                                                 const PromptTemplates& tpl);

/// One PromptPair per (source, keyword). Client failures surface as
/// RetryableError carrying the offending source/keyword. When `categories`
/// is given, each keyword is resolved to its owning category name.
std::vector<PromptPair> generate_prompt_pairs(const std::vector<std::string>& sources,
                                              const std::vector<std::string>& keywords,
                                              PromptClient& client,
                                              const PromptTemplates& tpl,
                                              const CategorySet* categories = nullptr);

// ============================ toy rendering ============================

/// Geometry and luminance budget of the procedural toy scenes. Background
/// and effect pixels sit at luminance-bin centers; the jitter budget
/// (structure_amp + detail_amp) stays below half a bin width so every pixel
/// remains inside its bin and histograms stay exactly bin-pure.
struct ToyWorld {
    int side = 32;
    int n_bins = 8;              ///< must match the encoder band count
    double fg_threshold = 0.15;  ///< structure-field level where effect pixels start
    double structure_amp = 0.04;
    double detail_amp = 0.015;
    int source_bins = 2;  ///< source scenes occupy bins [0, source_bins)

    double bin_center(int bin) const { return (bin + 0.5) / n_bins; }
    /// The prompt minus its leading (weather/effect) word. Target prompts are
    /// instead peeled by their spliced keyword inside toy_text_embedding, so a
    /// source and its target resolve to the same scene and background.
    static std::string scene_key(const std::string& prompt);
    int source_bin(const std::string& prompt) const;
    void validate() const;
};

/// Procedural texture: a smooth seeded structure field selects background vs
/// effect pixels (when `with_fg`); a second wave set plus a detail field add
/// in-bin luminance jitter. Channels are equal, so pixel luminance is exact.
Image render_scene(const ToyWorld& w, double bg_lum, double fg_lum, bool with_fg,
                   uint64_t structure_seed, uint64_t detail_seed);

/// Stand-in text tower: a prompt embeds as the image-tower embedding of its
/// canonical render (prompt-derived structure seed, no generation noise).
/// Pass the category for target prompts, null for plain source prompts.
EmbeddingVector toy_text_embedding(const std::string& prompt, const CategoryInfo* category,
                                   const ToyWorld& world, const EncoderSuite& suite);

/// Image-pair generation boundary (the attention-controlled generator in the
/// full system). p_value is recorded as provenance on every triplet.
struct PairGenerator {
    virtual ~PairGenerator() = default;
    virtual std::pair<Image, Image> generate(const PromptPair& pair, int seed) = 0;
    virtual double p_value() const { return 0.5; }
};

/// Renders (before, after) scenes that share a structure field: the source
/// scene is pure background; the target adds the category's effect.
class ToyPairGenerator : public PairGenerator {
  public:
    ToyPairGenerator(ToyWorld world, CategorySet categories);
    std::pair<Image, Image> generate(const PromptPair& pair, int seed) override;

  private:
    ToyWorld world_;
    CategorySet categories_;
};

// ============================ triplets & filtering ============================

enum class Subset { SYNTHETIC, REAL };
std::string to_string(Subset s);
Subset subset_from_string(const std::string& s);

struct EditTriplet {
    Image before;
    Image after;
    AudioClip audio;
    std::string audio_path;  ///< manifest reference
    std::string category;
    Subset subset = Subset::SYNTHETIC;
    int seed = 0;
    double p_value = 0.5;          ///< synthetic generation provenance
    bool mask_provenance = false;  ///< real triplets: a localization mask was applied

    void validate() const;
};

struct FilterThresholds {
    double directional_min = 0.2;
    double iis_min = 0.7;
    double avs_min = 0.2;
    double real_iis_discard_above = 0.7;
    /// "comparative": discard when sim(audio, inpainted) >= sim(audio, original).
    /// "absolute": discard when sim(audio, inpainted) > avs_min.
    std::string real_audio_rule = "comparative";

    void validate() const;
};

/// Everything the rules need, decoupled from media so rule tables are testable
/// in isolation. For REAL triplets dir_sim stores the comparative audio margin
/// sim(audio, original) - sim(audio, inpainted) and avs stores
/// sim(audio, original).
struct FilterMeasurements {
    double dir_sim = 0.0;
    double iis = 0.0;
    double avs = 0.0;
    bool degenerate_dir = false;
    bool empty_mask = false;
};

struct FilterDecision {
    bool keep = false;
    std::vector<std::string> reasons;  ///< failed rules as "id=measured"; empty iff keep
};

FilterDecision decide_synthetic(const FilterMeasurements& m, const FilterThresholds& th);
FilterDecision decide_real(const FilterMeasurements& m, const FilterThresholds& th);

struct DirectionalResult {
    double value = 0.0;
    bool degenerate = false;  ///< a zero delta on either side; value forced to 0
};

/// cosine( I(tgt)-I(src), tgt_txt-src_txt ) in the vision-language space.
DirectionalResult directional_similarity(const Image& src_img, const Image& tgt_img,
                                         const EmbeddingVector& src_txt,
                                         const EmbeddingVector& tgt_txt,
                                         const ImageEncoder& image_encoder);

FilterMeasurements measure_synthetic(const EditTriplet& t, const EmbeddingVector& src_txt,
                                     const EmbeddingVector& tgt_txt,
                                     const EncoderSuite& suite);

FilterDecision filter_synthetic(const EditTriplet& t, const EmbeddingVector& src_txt,
                                const EmbeddingVector& tgt_txt, const EncoderSuite& suite,
                                const FilterThresholds& th);

// ============================ real-data branch ============================

struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> on;  ///< row-major, nonzero = masked

    uint8_t at(int y, int x) const { return on[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return on[static_cast<size_t>(y) * width + x]; }
    int count() const;
    bool empty() const { return count() == 0; }
};

struct Localizer {
    virtual ~Localizer() = default;
    virtual Mask localize(const Image& img, const AudioClip& audio) const = 0;
};

struct Inpainter {
    virtual ~Inpainter() = default;
    virtual Image fill(const Image& img, const Mask& mask) const = 0;
};

/// Coarse box covering `fraction` of each side, centered; 0 localizes nothing.
class FixedBoxLocalizer : public Localizer {
  public:
    explicit FixedBoxLocalizer(double fraction = 0.5);
    Mask localize(const Image& img, const AudioClip& audio) const override;

  private:
    double fraction_;
};

/// Replaces masked pixels with the mean color of the unmasked region
/// (mid-gray when the mask covers everything).
class MeanFillInpainter : public Inpainter {
  public:
    Image fill(const Image& img, const Mask& mask) const override;
};

/// Returns the input unchanged — a deliberately failing inpainter.
class IdentityInpainter : public Inpainter {
  public:
    Image fill(const Image& img, const Mask& mask) const override;
};

/// Fixture frame in the style of the real subset: background scene with the
/// category's effect filling a centered box of the given side fraction.
Image toy_real_scene(const ToyWorld& w, const CategoryInfo& cat, double box_fraction,
                     uint64_t seed);

struct RealBuildResult {
    EditTriplet triplet;  ///< before = inpainted, after = original
    FilterMeasurements measurements;
    FilterDecision decision;
};

/// Localize, inpaint, measure, decide. An empty mask discards with
/// reason no_source_localized.
RealBuildResult build_real_triplet(const Image& img, const AudioClip& audio,
                                   const std::string& category, const Localizer& loc,
                                   const Inpainter& inp, const EncoderSuite& suite,
                                   const FilterThresholds& th);

// ============================ manifest ============================

struct ManifestRecord {
    std::string before_path;
    std::string after_path;
    std::string audio_path;
    std::string category;
    Subset subset = Subset::SYNTHETIC;
    int seed = 0;
    double dir_sim = 0.0;
    double iis = 0.0;
    double avs = 0.0;
    bool decision = false;
    std::vector<std::string> reasons;
};

/// JSON-lines, one record per line; read(write(x)) == x. Malformed lines
/// raise IoError naming the line number.
void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path);
std::vector<ManifestRecord> read_manifest(const std::string& path);

struct ManifestStats {
    int64_t total = 0;
    int64_t synthetic = 0;
    int64_t real = 0;
    int64_t kept = 0;
    int64_t discarded = 0;
};
ManifestStats manifest_stats(const std::vector<ManifestRecord>& records);

/// Brute-force re-application of the rules to the stored measurements; the
/// returned decisions must reproduce every record's keep/discard flag.
std::vector<FilterDecision> reevaluate_manifest(const std::vector<ManifestRecord>& records,
                                                const FilterThresholds& th);

// ============================ builder ============================

struct SyntheticBuildConfig {
    int seeds_per_pair = 5;
    uint64_t seed = 101;
    FilterThresholds thresholds;
    ToyWorld world;
    double audio_seconds = 1.0;

    void validate() const;
};

struct BuildReport {
    std::vector<EditTriplet> kept;
    std::vector<ManifestRecord> records;  ///< every candidate, kept or discarded
    std::vector<std::string> skipped;     ///< generation failures (skip-and-log)
};

/// Five (configurable) seeds per pair, each rendered, measured, and filtered.
BuildReport build_synthetic(const std::vector<PromptPair>& pairs, PairGenerator& gen,
                            const CategorySet& cats, const EncoderSuite& suite,
                            const SyntheticBuildConfig& cfg);

/// One-call toy dataset: stock sources x one keyword per toy category.
BuildReport build_toy_synthetic_dataset(int sources, const EncoderSuite& suite,
                                        const SyntheticBuildConfig& cfg);

/// Write kept media (PNG/WAV) plus the full manifest under `dir`; returns the
/// manifest path. Media paths inside records are relative to `dir`.
std::string write_dataset(const BuildReport& report, const std::string& dir);

/// Load kept triplets back from a manifest (media files must exist).
std::vector<EditTriplet> load_triplets(const std::string& manifest_path,
                                       const std::string& dir);

}  // namespace soundedit
