#include "soundedit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace soundedit {

namespace {

constexpr size_t kLogTail = 50;

TrainConfig validated(TrainConfig cfg) {
    cfg.validate();
    return cfg;
}

void fisher_yates(std::vector<size_t>& order, RandomStream& rng) {
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
}

std::string loss_dump(const char* what, double ldm, double nce, double l1) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%s (l_ldm=%.9g l_nce=%.9g l_l1=%.9g)", what, ldm, nce, l1);
    return buf;
}

}  // namespace

// ============================ model bundle ============================

EditModel EditModel::build(ModelConfig cfg) {
    cfg.validate();
    EditModel m{cfg,
                EncoderSuite::from_config(cfg.encoders),
                std::make_unique<ToyAutoencoder>(cfg.autoencoder),
                NoiseSchedule(cfg.schedule),
                MappingNetwork(cfg.mapping),
                Denoiser(cfg.denoiser),
                ParamStore{}};
    if (m.config.lora.targets.empty())
        m.config.lora.targets = m.denoiser.cross_attention_projection_names();
    m.lora = init_lora(m.denoiser.params(), m.config.lora);
    return m;
}

Tensor EditModel::condition_for(const AudioClip& audio) const {
    EmbeddingVector fa = suite.audio->embed(audio);
    Tensor tokens = mapping.forward(fa.values);
    return suite.condition->encode(tokens);
}

Image EditModel::edit(const Image& source, const AudioClip& audio, const SamplerConfig& scfg,
                      RandomStream& rng) const {
    Tensor cond = condition_for(audio);
    DenoiserFn f = make_adapted_denoiser_fn(denoiser, lora, config.lora);
    EditResult r = sample_edit(f, schedule, scfg, *codec, source, cond,
                               suite.condition->null_condition(), rng);
    return r.image;
}

uint64_t EditModel::frozen_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t v) { h = fnv1a64(&v, sizeof(v), h); };
    mix(suite.fingerprint());
    mix(codec->fingerprint());
    mix(denoiser.fingerprint());
    return h;
}

EditFn make_edit_fn(const EditModel& model, const SamplerConfig& scfg, uint64_t seed) {
    scfg.validate();
    return [&model, scfg, seed](const Image& src, const AudioClip& audio) {
        RandomStream rng(seed);
        return model.edit(src, audio, scfg, rng);
    };
}

// ============================ optimizer ============================

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("adam: learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("adam: beta1 must lie in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam: beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
    cfg_.validate();
}

void Adam::step(const std::vector<GradientUpdate>& updates) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const GradientUpdate& u : updates) {
        if (u.store == nullptr || u.grads == nullptr)
            throw ConfigError("adam: update is missing its store or gradients");
        for (const auto& [name, g] : *u.grads) {
            Tensor& p = u.store->at(name);
            if (!p.same_shape(g) && g.size() > 0)
                throw ShapeError("adam: gradient shape mismatch for " + name);
            auto it = slots_.find(u.group + "/" + name);
            if (it == slots_.end())
                it = slots_
                         .emplace(u.group + "/" + name,
                                  std::make_pair(Tensor::zeros(p.shape), Tensor::zeros(p.shape)))
                         .first;
            Tensor& m = it->second.first;
            Tensor& v = it->second.second;
            for (size_t i = 0; i < p.data.size(); ++i) {
                const double gi = i < g.data.size() ? g.data[i] : 0.0;
                m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
                v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
                p.data[i] -= cfg_.learning_rate * (m.data[i] / bc1) /
                             (std::sqrt(v.data[i] / bc2) + cfg_.eps);
            }
        }
    }
}

void Adam::restore(int64_t t, std::map<std::string, std::pair<Tensor, Tensor>> slots) {
    if (t < 0) throw ConfigError("adam: negative step count");
    t_ = t;
    slots_ = std::move(slots);
}

// ============================ trainer ============================

void Checkpoint::validate() const {
    if (step < 0) throw ConfigError("checkpoint: negative step");
    if (adam_step < 0) throw ConfigError("checkpoint: negative optimizer step");
    if (mapping_params.count() == 0) throw ConfigError("checkpoint: no mapping parameters");
    model_config.validate();
    train_config.validate();
    adam_config.validate();
}

Trainer::Trainer(EditModel& model, TrainConfig cfg)
    : model_(model),
      cfg_(validated(std::move(cfg))),
      adam_(AdamConfig{cfg_.learning_rate, 0.9, 0.999, 1e-8}),
      rng_(cfg_.seed) {
    const int factor = model_.codec->factor();
    if (cfg_.resolution % factor != 0)
        throw ConfigError("train: resolution must be a multiple of the autoencoder factor");
    if ((cfg_.resolution / factor) % 4 != 0)
        throw ConfigError("train: latent side must be divisible by 4 for the denoiser");
    if (cfg_.n_tokens != model_.config.mapping.n_tokens)
        throw ConfigError("train: n_tokens disagrees with the mapping network");
}

LossReport Trainer::batch_losses(const std::vector<const EditTriplet*>& batch, RandomStream& draw,
                                 bool want_grads, bool apply_update,
                                 std::vector<std::pair<std::string, Tensor>>* mapping_grads,
                                 std::vector<std::pair<std::string, Tensor>>* lora_grads) {
    if (batch.empty()) throw ConfigError("train: empty batch");
    const int b = static_cast<int>(batch.size());
    const int factor = model_.codec->factor();
    const int side_lat = cfg_.resolution / factor;
    const int c_lat = model_.codec->latent_channels();

    Tape t;
    BoundParams mp = bind_params(t, model_.mapping.params(), want_grads);
    BoundParams dp = bind_params(t, model_.denoiser.params(), false);
    BoundParams lp = bind_params(t, model_.lora, want_grads);
    apply_lora(t, dp, lp, model_.config.lora);

    const int d_vl = model_.suite.image->dim();
    Tensor qi({b, d_vl});
    std::vector<Var> qv_rows;
    Var ldm_sum, l1_sum;
    for (int j = 0; j < b; ++j) {
        const EditTriplet& s = *batch[j];
        if (s.before.height != cfg_.resolution || s.before.width != cfg_.resolution ||
            s.after.height != cfg_.resolution || s.after.width != cfg_.resolution)
            throw ConfigError("train: triplet images must be " +
                              std::to_string(cfg_.resolution) + "x" +
                              std::to_string(cfg_.resolution));

        EmbeddingVector fa = model_.suite.audio->embed(s.audio);
        Var tokens = model_.mapping.forward_t(t, mp, t.constant(fa.values));
        Var cond = model_.suite.condition->encode_t(t, tokens);

        // Per-sample draws, in a fixed order: timestep, noise, then the
        // optional dropout coin (only when dropout is enabled).
        const int tj = draw.uniform_int(0, model_.schedule.timesteps() - 1);
        Tensor z0 = model_.codec->encode(s.after);
        Tensor zsrc = model_.codec->encode(s.before);
        Tensor eps = Tensor::randn(z0.shape, draw);
        const bool drop = cfg_.cond_dropout > 0.0 && draw.uniform() < cfg_.cond_dropout;
        Tensor zt = model_.schedule.add_noise(z0, eps, tj);

        Tensor zc({zt.rows(), 2 * c_lat});
        for (int r = 0; r < zt.rows(); ++r)
            for (int c = 0; c < c_lat; ++c) {
                zc.at(r, c) = zt.at(r, c);
                zc.at(r, c_lat + c) = zsrc.at(r, c);
            }

        // Dropout silences only the denoising pathway; the contrastive head
        // always sees the real condition.
        Var cond_used =
            drop ? t.constant(model_.suite.condition->null_condition()) : cond;
        Var pred = model_.denoiser.forward_t(t, dp, t.constant(zc), side_lat, side_lat,
                                             static_cast<double>(tj), cond_used);
        Var ldm_j = ldm_loss_t(t, pred, t.constant(eps));
        ldm_sum = j == 0 ? ldm_j : t.add(ldm_sum, ldm_j);
        Var l1_j = l1_token_reg_t(t, tokens);
        l1_sum = j == 0 ? l1_j : t.add(l1_sum, l1_j);

        qv_rows.push_back(model_.suite.condition->project_t(t, cond));
        EmbeddingVector fi = model_.suite.image->embed(s.after);
        for (int c = 0; c < d_vl; ++c) qi.at(j, c) = fi.values[c];
    }

    Var ldm = t.scale(ldm_sum, 1.0 / b);
    Var l1 = t.scale(l1_sum, 1.0 / b);
    Var nce = info_nce_t(t, t.concat_rows(qv_rows), t.constant(qi));

    LossWeights w = cfg_.weights;
    if (!cfg_.use_nce) w.lambda_nce = 0.0;  // reported below, excluded from the total
    TotalLoss tot = total_loss_t(t, ldm, nce, l1, w);
    if (!std::isfinite(tot.report.l_total))
        throw NumericError(loss_dump("train: non-finite loss", tot.report.l_ldm,
                                     tot.report.l_nce, tot.report.l_l1));

    if (want_grads) {
        t.backward(tot.total);
        auto mg = collect_grads(t, model_.mapping.params(), mp);
        auto lg = collect_grads(t, model_.lora, lp);
        if (apply_update)
            adam_.step(
                {{"mapping", &model_.mapping.params(), &mg}, {"lora", &model_.lora, &lg}});
        if (mapping_grads) *mapping_grads = std::move(mg);
        if (lora_grads) *lora_grads = std::move(lg);
    }
    return tot.report;
}

LossReport Trainer::evaluate(const std::vector<const EditTriplet*>& batch, RandomStream& draw) {
    return batch_losses(batch, draw, false, false, nullptr, nullptr);
}

LossReport Trainer::gradients(const std::vector<const EditTriplet*>& batch, RandomStream& draw,
                              std::vector<std::pair<std::string, Tensor>>& mapping_grads,
                              std::vector<std::pair<std::string, Tensor>>& lora_grads) {
    return batch_losses(batch, draw, true, false, &mapping_grads, &lora_grads);
}

LossReport Trainer::train_step(const std::vector<const EditTriplet*>& batch) {
    auto t0 = std::chrono::steady_clock::now();
    LossReport rep = batch_losses(batch, rng_, true, true, nullptr, nullptr);
    ++step_;
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    log_.push_back({step_, rep.l_ldm, rep.l_nce, rep.l_l1, rep.l_total, ms});
    return rep;
}

double Trainer::validation_loss(const std::vector<const EditTriplet*>& val) {
    // A fresh fork each evaluation replays identical timesteps and noise, so
    // successive validation losses are comparable.
    RandomStream vr = rng_.fork("val");
    double sum = 0.0;
    size_t n = 0;
    for (size_t at = 0; at < val.size(); at += static_cast<size_t>(cfg_.batch_size)) {
        size_t end = std::min(val.size(), at + static_cast<size_t>(cfg_.batch_size));
        std::vector<const EditTriplet*> chunk(val.begin() + static_cast<long>(at),
                                              val.begin() + static_cast<long>(end));
        LossReport rep = batch_losses(chunk, vr, false, false, nullptr, nullptr);
        sum += rep.l_total * static_cast<double>(chunk.size());
        n += chunk.size();
    }
    return sum / static_cast<double>(n);
}

TrainResult Trainer::run(const std::vector<EditTriplet>& data,
                         const std::function<void(const Checkpoint&)>& sink) {
    if (data.empty()) throw ConfigError("train: empty dataset");

    std::vector<const EditTriplet*> train_set, val_set;
    train_set.reserve(data.size());
    for (const EditTriplet& d : data) train_set.push_back(&d);
    if (cfg_.val_fraction > 0.0 && data.size() >= 2) {
        size_t n_val = static_cast<size_t>(
            std::llround(static_cast<double>(data.size()) * cfg_.val_fraction));
        n_val = std::clamp<size_t>(n_val, 1, data.size() - 1);
        std::vector<size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        RandomStream split = rng_.fork("split");
        fisher_yates(order, split);
        std::vector<const EditTriplet*> rest;
        for (size_t i = 0; i < order.size(); ++i)
            (i < n_val ? val_set : rest).push_back(&data[order[i]]);
        train_set = std::move(rest);
    }

    TrainResult res;
    RandomStream shuffle = rng_.fork("shuffle");
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // forces a shuffle before the first batch

    double best_val = std::numeric_limits<double>::infinity();
    int streak = 0;
    while (step_ < cfg_.steps) {
        std::vector<const EditTriplet*> batch;
        batch.reserve(static_cast<size_t>(cfg_.batch_size));
        for (int i = 0; i < cfg_.batch_size; ++i) {
            if (cursor == order.size()) {
                fisher_yates(order, shuffle);
                cursor = 0;
            }
            batch.push_back(train_set[order[cursor++]]);
        }

        LossReport rep = train_step(batch);
        res.log.push_back(log_.back());
        if (res.log.size() == 1) res.first = rep;
        res.last = rep;

        bool stop = false;
        if (!val_set.empty() && (step_ % cfg_.val_every == 0 || step_ == cfg_.steps)) {
            double v = validation_loss(val_set);
            res.val_history.push_back(v);
            if (v < best_val) {
                best_val = v;
                streak = 0;
            } else if (cfg_.early_stop_patience > 0 && ++streak >= cfg_.early_stop_patience) {
                stop = true;
            }
        }
        if (sink && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
            step_ < cfg_.steps && !stop)
            sink(make_checkpoint());
        if (stop) {
            res.early_stopped = true;
            break;
        }
    }
    res.steps_run = static_cast<int64_t>(res.log.size());
    if (sink) sink(make_checkpoint());
    return res;
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint c;
    c.step = step_;
    c.model_config = model_.config;
    c.train_config = cfg_;
    c.mapping_params = model_.mapping.params();
    c.lora_params = model_.lora;
    c.adam_config = adam_.config();
    c.adam_step = adam_.step_count();
    c.adam_slots = adam_.slots();
    c.rng_state = rng_.save_state();
    c.encoders_fingerprint = model_.suite.fingerprint();
    c.autoencoder_fingerprint = model_.codec->fingerprint();
    c.denoiser_fingerprint = model_.denoiser.fingerprint();
    c.frozen_fingerprint = model_.frozen_fingerprint();
    size_t from = log_.size() > kLogTail ? log_.size() - kLogTail : 0;
    c.log_tail.assign(log_.begin() + static_cast<long>(from), log_.end());
    return c;
}

void Trainer::resume(const Checkpoint& ckpt) {
    ckpt.validate();
    if (ckpt.frozen_fingerprint != model_.frozen_fingerprint())
        throw ConfigError("checkpoint: frozen-module fingerprint mismatch");
    adam_ = Adam(ckpt.adam_config);
    adam_.restore(ckpt.adam_step, ckpt.adam_slots);
    rng_.restore_state(ckpt.rng_state);
    step_ = ckpt.step;
    log_ = ckpt.log_tail;
}

// ============================ ablation matrix ============================

std::vector<AblationRow> ablation_rows() {
    return {{"A", 1, true}, {"B", 5, false}, {"C", 5, true}, {"D", 10, true}};
}

std::vector<AblationOutcome> run_ablation(const GlobalConfig& base,
                                          const std::vector<EditTriplet>& data,
                                          const CategorySet& categories) {
    if (data.empty()) throw ConfigError("ablation: empty dataset");
    std::vector<AblationOutcome> out;
    for (const AblationRow& row : ablation_rows()) {
        GlobalConfig g = base;
        g.train.n_tokens = row.n_tokens;
        g.train.use_nce = row.use_nce;
        g.validate();

        EditModel model = EditModel::build(g.model());
        Trainer trainer(model, g.train);

        AblationOutcome o;
        o.row = row;
        o.train = trainer.run(data);
        o.checkpoint = trainer.make_checkpoint();
        o.checkpoint.tag = row.tag;

        std::vector<EvalSample> samples;
        for (size_t i = 0; i < data.size(); ++i) {
            const EditTriplet& s = data[i];
            EvalSample e;
            e.id = row.tag + "_" + std::to_string(i);
            e.audio = s.audio;
            RandomStream er(fnv1a64(row.tag + "|edit|" + std::to_string(i)) ^ g.seed);
            e.edited = model.edit(s.before, s.audio, g.sampler, er);
            e.reference = s.after;
            const CategoryInfo* cat = categories.find(s.category);
            if (cat != nullptr && cat->toy && cat->lum_bin >= 0) {
                Image canon(s.after.height, s.after.width,
                            (cat->lum_bin + 0.5) / model.config.encoders.n_bands);
                e.category_text = model.suite.image->embed(canon);
            } else {
                e.category_text = model.suite.image->embed(s.after);
            }
            samples.push_back(std::move(e));
        }
        o.metrics = evaluate_dataset(samples, model.suite);
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace soundedit
