#pragma once

// Phase-1 (softmax + dice) and phase-2 (frozen encoder, sigmoid + boundary loss)
// training loops with early stopping, plateau learning-rate decay and pixel metrics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/adam.hpp"
#include "cashewmap/nn/losses.hpp"
#include "cashewmap/nn/unet.hpp"
#include "cashewmap/patch.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

struct TrainConfig {
    int batch_size = 16;
    int max_epochs = 20;
    int patience = 3;
    double learning_rate = 1e-3;
    double lr_decay = 0.5;       // factor applied on a validation plateau
    int lr_patience = 2;         // epochs without improvement before decaying
    double min_learning_rate = 1e-6;
    std::uint64_t seed = 1;
    int phase = 1;
    double val_fraction = 0.2;
    bool augment = true;
    bool strict = false;         // phase 2 refuses an untrained input model
    double threshold = 0.5;      // binary decision threshold
    unsigned jobs = 1;
};

inline void validate(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (c.patience < 1) throw ConfigError("patience must be >= 1");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0,1]");
    if (c.lr_patience < 1) throw ConfigError("lr_patience must be >= 1");
    if (c.phase != 1 && c.phase != 2) throw ConfigError("phase must be 1 or 2");
    if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0,1)");
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
            {"patience", c.patience},           {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},           {"lr_patience", c.lr_patience},
            {"min_learning_rate", c.min_learning_rate}, {"seed", c.seed},
            {"phase", c.phase},                 {"val_fraction", c.val_fraction},
            {"augment", c.augment},             {"strict", c.strict},
            {"threshold", c.threshold}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.lr_patience = j.value("lr_patience", c.lr_patience);
    c.min_learning_rate = j.value("min_learning_rate", c.min_learning_rate);
    c.seed = j.value("seed", c.seed);
    c.phase = j.value("phase", c.phase);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.augment = j.value("augment", c.augment);
    c.strict = j.value("strict", c.strict);
    c.threshold = j.value("threshold", c.threshold);
    return c;
}

// --- metrics -----------------------------------------------------------------

struct CategoryMetrics {
    double precision = 0, recall = 0, f1 = 0;
    std::size_t support = 0;  // reference pixels
};

struct MetricReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    std::map<int, CategoryMetrics> per_category;
    std::size_t n_samples = 0;
    std::size_t n_pixels = 0;
};

inline double f1_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Pixel confusion counts keyed by (reference, predicted).
class ConfusionCounter {
public:
    explicit ConfusionCounter(int classes) : k_(classes), n_(static_cast<std::size_t>(classes) * classes, 0) {}

    void add(int ref, int pred) { ++n_[static_cast<std::size_t>(ref) * k_ + pred]; }
    void merge(const ConfusionCounter& o) {
        for (std::size_t i = 0; i < n_.size(); ++i) n_[i] += o.n_[i];
    }

    /// Binary reports describe class 1; multi-class reports macro-average precision and
    /// recall over the classes present in reference or prediction.
    MetricReport report(bool binary, std::size_t samples) const {
        MetricReport r;
        r.n_samples = samples;
        std::vector<std::size_t> row(k_, 0), col(k_, 0);
        std::size_t diag = 0;
        for (int i = 0; i < k_; ++i)
            for (int j = 0; j < k_; ++j) {
                const auto v = n_[static_cast<std::size_t>(i) * k_ + j];
                row[i] += v;
                col[j] += v;
                r.n_pixels += v;
                if (i == j) diag += v;
            }
        if (r.n_pixels == 0) return r;
        r.accuracy = double(diag) / double(r.n_pixels);
        for (int c = 0; c < k_; ++c) {
            if (row[c] == 0 && col[c] == 0) continue;
            const double tp = double(n_[static_cast<std::size_t>(c) * k_ + c]);
            CategoryMetrics m;
            m.precision = col[c] ? tp / double(col[c]) : 0.0;
            m.recall = row[c] ? tp / double(row[c]) : 0.0;
            m.f1 = f1_score(m.precision, m.recall);
            m.support = row[c];
            r.per_category[c] = m;
        }
        if (binary) {
            auto it = r.per_category.find(1);
            if (it != r.per_category.end()) {
                r.precision = it->second.precision;
                r.recall = it->second.recall;
            }
        } else {
            for (const auto& [c, m] : r.per_category) {
                r.precision += m.precision;
                r.recall += m.recall;
            }
            r.precision /= double(r.per_category.size());
            r.recall /= double(r.per_category.size());
        }
        r.f1 = f1_score(r.precision, r.recall);
        return r;
    }

private:
    int k_;
    std::vector<std::size_t> n_;
};

namespace train_detail {

inline void tally(const nn::SegModel<float>& m, const nn::Tensor<float>& out, const PatchStack& p, double threshold,
                  ConfusionCounter& cc) {
    const std::size_t n = out.plane();
    if (m.head_type == nn::HeadType::Sigmoid) {
        for (std::size_t i = 0; i < n; ++i) cc.add(p.binary_mask[i], out.data[i] >= threshold ? 1 : 0);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        float v = out.data[i];
        for (int c = 1; c < out.c; ++c) {
            const float x = out.data[static_cast<std::size_t>(c) * n + i];
            if (x > v) {
                v = x;
                best = c;
            }
        }
        cc.add(p.label_mask[i], best);
    }
}

inline void check_targets(const nn::SegModel<float>& m, const PatchStack& p) {
    const std::size_t n = static_cast<std::size_t>(m.cfg.patch_size) * m.cfg.patch_size;
    if (m.head_type == nn::HeadType::Sigmoid) {
        if (p.binary_mask.size() != n) throw DataError("patch lacks a binary cashew mask (run phase-2 filtering)");
    } else {
        if (p.label_mask.size() != n) throw DataError("patch lacks a category label mask");
        for (auto v : p.label_mask)
            if (v >= m.head_channels)
                throw DataError("label code " + std::to_string(v) + " exceeds the softmax head size " +
                                std::to_string(m.head_channels));
    }
}

/// Loss and d loss / d output for one patch under the model's head type.
inline nn::LossResult<float> patch_loss(const nn::SegModel<float>& m, const nn::Tensor<float>& out,
                                        const PatchStack& p, const std::vector<int>* categories = nullptr) {
    if (m.head_type == nn::HeadType::Softmax)
        return nn::dice_loss(out, nn::one_hot<float>(p.label_mask, out.c, out.h, out.w), 1.0f, categories);
    nn::Tensor<float> t(1, out.h, out.w);
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = p.binary_mask[i];
    return nn::boundary_loss(out, t);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace train_detail

/// Sorted category codes occurring in the label masks. Phase-1 dice is averaged over
/// these; head channels for categories absent from the data are left to the softmax.
inline std::vector<int> label_categories(const std::vector<PatchStack>& patches) {
    std::vector<bool> seen;
    for (const auto& p : patches)
        for (auto v : p.label_mask) {
            if (v >= seen.size()) seen.resize(v + 1u, false);
            seen[v] = true;
        }
    std::vector<int> out;
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (seen[c]) out.push_back(static_cast<int>(c));
    return out;
}

/// Pixel-level metrics and mean loss of a model over a patch source (dropout off).
inline std::pair<MetricReport, double> evaluate_with_loss(const nn::SegModel<float>& m,
                                                          const std::vector<PatchStack>& patches, double threshold = 0.5,
                                                          unsigned jobs = 1,
                                                          const std::vector<int>* categories = nullptr) {
    if (patches.empty()) throw DataError("empty evaluation source");
    const bool binary = m.head_type == nn::HeadType::Sigmoid;
    const int k = binary ? 2 : m.head_channels;
    std::vector<ConfusionCounter> counts(patches.size(), ConfusionCounter(k));
    std::vector<double> losses(patches.size(), 0.0);
    parallel_for(patches.size(), jobs, [&](std::size_t i) {
        train_detail::check_targets(m, patches[i]);
        nn::ForwardCache<float> cache;
        const auto out = nn::forward(m, nn::to_inputs<float>(patches[i]), &cache);
        train_detail::tally(m, out, patches[i], threshold, counts[i]);
        losses[i] = train_detail::patch_loss(m, out, patches[i], categories).value;
    });
    ConfusionCounter total(k);
    double loss = 0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        total.merge(counts[i]);
        loss += losses[i];
    }
    return {total.report(binary, patches.size()), loss / double(patches.size())};
}

inline MetricReport evaluate(const nn::SegModel<float>& m, const std::vector<PatchStack>& patches,
                             double threshold = 0.5, unsigned jobs = 1) {
    return evaluate_with_loss(m, patches, threshold, jobs).first;
}

// --- training ------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    std::string split;  // "train" or "val"
    double loss = 0;
    MetricReport metrics;
};

struct TrainResult {
    nn::SegModel<float> model;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    int epochs_run = 0;
    double best_val_loss = 0;
};

/// One optimizer update on a batch. Per-sample gradients are summed in batch order so
/// the result does not depend on `jobs`. Returns the mean batch loss and, when given,
/// tallies the batch predictions into `cc`.
inline double train_batch(nn::SegModel<float>& m, nn::Adam<float>& opt, const std::vector<const PatchStack*>& batch,
                          std::uint64_t seed, unsigned jobs = 1, ConfusionCounter* cc = nullptr,
                          double threshold = 0.5, const std::vector<int>* categories = nullptr) {
    if (batch.empty()) throw DataError("empty training batch");
    const std::size_t n = batch.size();
    std::vector<std::vector<float>> grads(n);
    std::vector<double> losses(n);
    std::vector<ConfusionCounter> counts;
    if (cc) counts.assign(n, *cc);
    const auto& model = m;
    parallel_for(n, jobs, [&](std::size_t i) {
        const PatchStack& p = *batch[i];
        train_detail::check_targets(model, p);
        std::mt19937_64 rng(train_detail::mix(seed, i));
        nn::ForwardOptions fo;
        fo.dropout_rate = model.cfg.dropout_rate;
        fo.rng = &rng;
        nn::ForwardCache<float> cache;
        const auto& out = nn::forward(model, nn::to_inputs<float>(p), &cache, fo);
        auto loss = train_detail::patch_loss(model, out, p, categories);
        losses[i] = loss.value;
        if (cc) {
            counts[i] = ConfusionCounter(model.head_type == nn::HeadType::Sigmoid ? 2 : model.head_channels);
            train_detail::tally(model, out, p, threshold, counts[i]);
        }
        grads[i].assign(model.params.total_size(), 0.0f);
        nn::backward(model, cache, loss.grad, grads[i]);
    });
    double mean = 0;
    for (double l : losses) mean += l;
    mean /= double(n);
    if (!std::isfinite(mean)) throw NumericError("non-finite training loss");
    std::vector<float> g(m.params.total_size(), 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += grads[i][j];
        if (cc) cc->merge(counts[i]);
    }
    for (auto& v : g) {
        v /= float(n);
        if (!std::isfinite(v)) throw NumericError("non-finite gradient");
    }
    opt.step(m.params, g);
    return mean;
}

namespace train_detail {

inline TrainResult run(nn::SegModel<float> m, const std::vector<PatchStack>& train, const std::vector<PatchStack>& val,
                       const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
    if (train.empty()) throw DataError("empty training source");
    if (val.empty()) throw DataError("empty validation source");
    const bool binary = m.head_type == nn::HeadType::Sigmoid;
    const std::vector<int> categories = binary ? std::vector<int>{} : label_categories(train);
    const std::vector<int>* cats = binary ? nullptr : &categories;
    nn::Adam<float> opt(cfg.learning_rate);
    TrainResult res;
    std::vector<float> best_params = m.params.values();
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0, since_lr = 0;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        ConfusionCounter cc(binary ? 2 : m.head_channels);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::vector<PatchStack> augmented;
            std::vector<const PatchStack*> batch;
            if (cfg.augment) {
                augmented.reserve(e - b);
                for (std::size_t i = b; i < e; ++i)
                    augmented.push_back(augment(train[order[i]], static_cast<int>(rng() % 8)));
                for (const auto& p : augmented) batch.push_back(&p);
            } else {
                for (std::size_t i = b; i < e; ++i) batch.push_back(&train[order[i]]);
            }
            const double l = train_batch(m, opt, batch, rng(), cfg.jobs, &cc, cfg.threshold, cats);
            if (!std::isfinite(l))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches + 1));
            loss_sum += l * double(e - b);
            ++batches;
        }
        EpochRecord tr{epoch, "train", loss_sum / double(train.size()), cc.report(binary, train.size())};
        auto [vm, vloss] = evaluate_with_loss(m, val, cfg.threshold, cfg.jobs, cats);
        if (!std::isfinite(vloss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord va{epoch, "val", vloss, vm};
        res.history.push_back(tr);
        res.history.push_back(va);
        if (on_epoch) {
            on_epoch(tr);
            on_epoch(va);
        }
        res.epochs_run = epoch;
        if (vloss < best) {
            best = vloss;
            best_params = m.params.values();
            res.best_epoch = epoch;
            since_best = since_lr = 0;
        } else {
            ++since_best;
            if (++since_lr >= cfg.lr_patience) {
                opt.set_learning_rate(std::max(cfg.min_learning_rate, opt.learning_rate() * cfg.lr_decay));
                since_lr = 0;
            }
            if (since_best >= cfg.patience) break;
        }
    }
    m.params.values() = best_params;
    m.trained = true;
    res.best_val_loss = best;
    res.model = std::move(m);
    return res;
}

}  // namespace train_detail

/// Multi-category training with the softmax head and dice loss. Returns the weights of
/// the epoch with the lowest validation loss.
inline TrainResult train_phase1(nn::SegModel<float> m, const std::vector<PatchStack>& train,
                                const std::vector<PatchStack>& val, const TrainConfig& cfg,
                                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    validate(cfg);
    if (cfg.phase != 1) throw ConfigError("train_phase1 needs phase = 1");
    if (m.head_type != nn::HeadType::Softmax) throw ConfigError("phase-1 training needs a softmax head");
    auto r = train_detail::run(std::move(m), train, val, cfg, on_epoch);
    r.model.phase = 1;
    return r;
}

/// Prepares a phase-1 model for fine-tuning: frozen encoder side, fresh sigmoid head.
inline nn::SegModel<float> prepare_phase2(nn::SegModel<float> m, const TrainConfig& cfg) {
    if (cfg.strict && !m.trained) throw ConfigError("phase-2 input model is untrained (strict mode)");
    m = nn::freeze_encoder(std::move(m));
    m = nn::swap_head(std::move(m), nn::HeadType::Sigmoid, 1, train_detail::mix(cfg.seed, 2));
    m.trained = false;
    return m;
}

/// Binary cashew fine-tuning with boundary loss; encoder-side parameters never change.
inline TrainResult train_phase2(nn::SegModel<float> m, const std::vector<PatchStack>& train,
                                const std::vector<PatchStack>& val, const TrainConfig& cfg,
                                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    validate(cfg);
    if (cfg.phase != 2) throw ConfigError("train_phase2 needs phase = 2");
    if (train.empty()) throw DataError("empty phase-2 training source (no cashew patches)");
    auto r = train_detail::run(prepare_phase2(std::move(m), cfg), train, val, cfg, on_epoch);
    r.model.phase = 2;
    return r;
}

/// Metrics history as CSV: epoch,split,loss,accuracy,precision,recall,f1.
inline std::string metrics_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,split,loss,accuracy,precision,recall,f1\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.8f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.split.c_str(), r.loss,
                      r.metrics.accuracy, r.metrics.precision, r.metrics.recall, r.metrics.f1);
        out += buf;
    }
    return out;
}

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [c, m] : r.per_category)
        cats[std::to_string(c)] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    return {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
            {"n_samples", r.n_samples}, {"n_pixels", r.n_pixels}, {"per_category", cats}};
}

}  // namespace cashewmap
