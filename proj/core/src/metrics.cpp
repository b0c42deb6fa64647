#include "soundedit/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace soundedit {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
    return m;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

// ============================ similarity metrics ============================

double avs(const AudioClip& audio, const Image& edited, const EncoderSuite& suite) {
    return cosine_similarity(suite.joint->embed_audio(audio), suite.joint->embed_image(edited));
}

double iis(const Image& edited, const Image& reference, const EncoderSuite& suite) {
    return cosine_similarity(suite.image->embed(edited), suite.image->embed(reference));
}

double tvs(const EmbeddingVector& category_text, const Image& edited, const EncoderSuite& suite) {
    return cosine_similarity(category_text, suite.image->embed(edited));
}

// ============================ FID ============================

double fid(const Tensor& features_a, const Tensor& features_b) {
    if (!features_a.is_matrix() || !features_b.is_matrix())
        throw ShapeError("fid: feature sets must be matrices");
    if (features_a.cols() != features_b.cols())
        throw ShapeError("fid: feature dimensions differ: " + std::to_string(features_a.cols()) +
                         " vs " + std::to_string(features_b.cols()));
    if (features_a.rows() < 1 || features_b.rows() < 1)
        throw ShapeError("fid: each feature set needs at least one row");
    if (!features_a.all_finite() || !features_b.all_finite())
        throw NumericError("fid: features contain non-finite values");

    const double eps = 1e-6;
    const int d = features_a.cols();
    auto stats = [&](const Tensor& t) {
        Eigen::MatrixXd x = to_eigen(t);
        Eigen::VectorXd mu = x.colwise().mean();
        Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
        if (t.rows() > 1) {
            Eigen::MatrixXd xc = x.rowwise() - mu.transpose();
            sigma = (xc.transpose() * xc) / static_cast<double>(t.rows() - 1);
        }
        sigma += eps * Eigen::MatrixXd::Identity(d, d);
        return std::make_pair(mu, sigma);
    };
    auto [mu1, s1] = stats(features_a);
    auto [mu2, s2] = stats(features_b);

    // Tr((s1 s2)^{1/2}) equals Tr((s1^{1/2} s2 s1^{1/2})^{1/2}); the inner
    // matrix is symmetric PSD by construction, which keeps the
    // eigendecomposition real and lets roundoff negatives be clipped safely.
    auto psd_eigenvalues = [](const Eigen::MatrixXd& m, const char* what) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
        if (eig.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
        Eigen::VectorXd ev = eig.eigenvalues();
        double lo = ev.minCoeff();
        double hi = ev.maxCoeff();
        if (lo < -1e-6 * std::max(1.0, std::abs(hi)))
            throw NumericError(std::string("fid: ") + what +
                               " is not PSD after regularization (eigenvalues span [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "])");
        return std::make_pair(eig.eigenvectors(), ev);
    };

    auto [u1, ev1] = psd_eigenvalues(s1, "covariance");
    Eigen::VectorXd root1(ev1.size());
    for (int i = 0; i < ev1.size(); ++i) root1[i] = std::sqrt(std::max(0.0, ev1[i]));
    Eigen::MatrixXd s1_sqrt = u1 * root1.asDiagonal() * u1.transpose();

    auto [u_mid, ev] = psd_eigenvalues(s1_sqrt * s2 * s1_sqrt, "covariance product");
    (void)u_mid;
    double tr_sqrt = 0.0;
    for (int i = 0; i < ev.size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, ev[i]));

    double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    if (!std::isfinite(value)) throw NumericError("fid: non-finite result");
    return value;
}

// ============================ dataset evaluation ============================

void MetricsReport::validate() const {
    if (n_samples < 1) throw ConfigError("metrics report: n_samples must be >= 1");
    for (double v : {avs, iis, tvs, fid})
        if (!std::isfinite(v)) throw NumericError("metrics report: non-finite metric");
    for (double v : {avs, iis, tvs})
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
            throw NumericError("metrics report: cosine metric outside [-1, 1]");
    if (fid < -1e-6) throw NumericError("metrics report: fid below the numerical floor");
}

MetricsReport evaluate_dataset(const std::vector<EvalSample>& samples, const EncoderSuite& suite) {
    if (samples.empty()) throw ConfigError("evaluate_dataset: no samples");
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return samples[a].id < samples[b].id;
    });

    const int n = static_cast<int>(samples.size());
    const int d = suite.image->dim();
    Tensor ref_feats({n, d});
    Tensor ed_feats({n, d});
    double sum_avs = 0.0, sum_iis = 0.0, sum_tvs = 0.0;
    for (int k = 0; k < n; ++k) {
        const EvalSample& s = samples[order[k]];
        if (s.id.empty()) throw ConfigError("evaluate_dataset: sample with empty id");
        sum_avs += avs(s.audio, s.edited, suite);
        sum_iis += iis(s.edited, s.reference, suite);
        sum_tvs += tvs(s.category_text, s.edited, suite);
        EmbeddingVector fr = suite.image->embed(s.reference);
        EmbeddingVector fe = suite.image->embed(s.edited);
        for (int c = 0; c < d; ++c) {
            ref_feats.at(k, c) = fr.values.data[c];
            ed_feats.at(k, c) = fe.values.data[c];
        }
    }

    MetricsReport rep;
    rep.avs = sum_avs / n;
    rep.iis = sum_iis / n;
    rep.tvs = sum_tvs / n;
    rep.fid = fid(ref_feats, ed_feats);
    rep.n_samples = n;
    rep.validate();
    return rep;
}

// ============================ volume sweep ============================

VolumeSweepResult volume_sweep(const Image& src, const AudioClip& audio,
                               const std::vector<double>& gains, const EditFn& edit,
                               const EncoderSuite& suite) {
    if (!edit) throw ConfigError("volume sweep: missing edit function");
    if (gains.empty()) throw ConfigError("volume sweep: no gains");
    for (size_t i = 0; i < gains.size(); ++i) {
        if (!std::isfinite(gains[i]) || gains[i] <= 0.0)
            throw ConfigError("volume sweep: gains must be positive");
        if (i > 0 && gains[i] <= gains[i - 1])
            throw ConfigError("volume sweep: gains must be strictly ascending");
    }
    src.validate();
    audio.validate();

    VolumeSweepResult res;
    res.gains = gains;
    for (double g : gains) {
        AudioClip varied = audio;
        varied.gain = audio.gain * g;
        Image edited = edit(src, varied);
        edited.validate();
        res.avs_trace.push_back(avs(varied, edited, suite));
        res.images.push_back(std::move(edited));
    }
    res.nondecreasing = std::is_sorted(res.avs_trace.begin(), res.avs_trace.end());
    return res;
}

// ============================ MOS aggregation ============================

const MOSCell& MOSTable::cell(const std::string& method, int question) const {
    if (question < 1 || question > 3) throw ConfigError("mos: question must be 1..3");
    auto it = methods.find(method);
    if (it == methods.end()) throw ConfigError("mos: unknown method \"" + method + "\"");
    return it->second[static_cast<size_t>(question - 1)];
}

void MOSTable::validate() const {
    if (rejected < 0) throw NumericError("mos table: negative rejection count");
    for (const auto& [method, cells] : methods) {
        if (method.empty()) throw ConfigError("mos table: empty method name");
        for (const MOSCell& c : cells) {
            if (c.count < 0) throw NumericError("mos table: negative count");
            if (c.count == 0 && c.mean != 0.0)
                throw NumericError("mos table: mean without ratings");
            if (c.count > 0 && (c.mean < 1.0 || c.mean > 5.0))
                throw NumericError("mos table: mean outside the 1..5 rating scale");
        }
    }
}

MOSTable mos_aggregate(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open responses: " + csv_path);

    struct Sums {
        std::array<double, 3> sum = {0.0, 0.0, 0.0};
        std::array<int64_t, 3> count = {0, 0, 0};
    };
    std::map<std::string, Sums> acc;
    MOSTable table;

    std::string line;
    int line_no = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> f = split_csv_row(line);
        if (first_content) {
            first_content = false;
            if (f.size() == 5 && f[0] == "rater_id" && f[1] == "sample_id" && f[2] == "method" &&
                f[3] == "question" && f[4] == "rating")
                continue;  // header row
        }
        auto malformed = [&](const std::string& why) {
            return IoError("responses line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 5) throw malformed("expected 5 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty()) throw malformed("empty rater or sample id");
        if (f[2].empty()) throw malformed("empty method");
        if (f[3].size() != 2 || f[3][0] != 'Q' || f[3][1] < '1' || f[3][1] > '3')
            throw malformed("question must be Q1..Q3, got \"" + f[3] + "\"");
        int q = f[3][1] - '1';
        size_t used = 0;
        int rating = 0;
        try {
            rating = std::stoi(f[4], &used);
        } catch (const std::exception&) {
            throw malformed("unreadable rating \"" + f[4] + "\"");
        }
        if (used != f[4].size()) throw malformed("unreadable rating \"" + f[4] + "\"");
        if (rating < 1 || rating > 5) {
            ++table.rejected;  // valid row shape, out-of-scale opinion
            continue;
        }
        Sums& s = acc[f[2]];
        s.sum[static_cast<size_t>(q)] += rating;
        s.count[static_cast<size_t>(q)] += 1;
    }

    for (const auto& [method, sums] : acc) {
        std::array<MOSCell, 3> cells;
        for (size_t q = 0; q < 3; ++q) {
            cells[q].count = sums.count[q];
            cells[q].mean = sums.count[q] > 0 ? sums.sum[q] / sums.count[q] : 0.0;
        }
        table.methods.emplace(method, cells);
    }
    table.validate();
    return table;
}

}  // namespace soundedit
