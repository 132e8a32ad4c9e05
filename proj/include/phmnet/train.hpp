#pragma once

// Training loop: SGD with Nesterov momentum, linear warmup followed by a
// cosine (or linear) schedule, L2 weight decay, cross-entropy, per-epoch
// metrics and checkpointing. Fully deterministic under a fixed seed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "phmnet/checkpoint.hpp"
#include "phmnet/data.hpp"
#include "phmnet/model.hpp"

namespace phm {

struct TrainConfig {
    std::size_t epochs = 120;
    std::size_t batch = 100;
    double lr = 0.1;
    double momentum = 0.9;  // Nesterov
    double weight_decay = 1e-4;
    std::size_t warmup_epochs = 10;
    std::string schedule = "cosine";  // cosine | linear
    std::uint64_t seed = 1;
    std::size_t eval_every = 1;
    bool augment = true;
    bool deterministic = true;

    void validate() const {
        if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be positive");
        if (warmup_epochs >= epochs) throw ConfigError("warmup epochs must be < total epochs");
        if (lr < 0) throw ConfigError("learning rate must be non-negative");
        if (schedule != "cosine" && schedule != "linear")
            throw ConfigError("schedule must be 'cosine' or 'linear'");
    }
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double lr = 0;
    double train_loss = 0;
    double train_top1 = 0;  // percent
    double val_loss = 0;
    double val_top1 = 0;  // percent
    double wall_seconds = 0;
};

// Warmup ramps linearly from lr/10 at epoch 1 to lr at the last warmup
// epoch; afterwards cosine decays to zero at the final epoch (or linearly,
// when configured).
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < 1 || epoch > cfg.epochs) throw ConfigError("lr_at: epoch out of range");
    const auto w = cfg.warmup_epochs;
    if (w > 0 && epoch <= w) {
        if (w == 1) return cfg.lr;
        const double f = static_cast<double>(epoch - 1) / static_cast<double>(w - 1);
        return cfg.lr * (0.1 + 0.9 * f);
    }
    const double progress =
        static_cast<double>(epoch - w) / static_cast<double>(cfg.epochs - w);
    if (cfg.schedule == "linear") return cfg.lr * (1.0 - progress);
    return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

struct SgdState {
    std::vector<Tensor> velocity;  // one buffer per parameter

    void ensure(const std::vector<Parameter*>& params) {
        if (velocity.size() == params.size()) return;
        velocity.clear();
        for (auto* p : params) velocity.emplace_back(p->value.shape);
    }
};

// v <- mu*v + (g + lambda*theta); theta <- theta - lr*(g + lambda*theta + mu*v)
inline void sgd_nesterov_step(const std::vector<Parameter*>& params, SgdState& state, double lr,
                              const TrainConfig& cfg) {
    state.ensure(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        Tensor& v = state.velocity[i];
        const double lambda = p.apply_decay ? cfg.weight_decay : 0.0;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad.data[j];
            if (!std::isfinite(g))
                throw NumericsError("non-finite gradient in parameter " + p.name);
            const double geff = g + lambda * p.value.data[j];
            v.data[j] = cfg.momentum * v.data[j] + geff;
            p.value.data[j] -= lr * (geff + cfg.momentum * v.data[j]);
        }
    }
}

namespace detail {

inline Tensor make_batch(const DatasetSplit& split, const std::vector<std::size_t>& idx,
                         std::size_t b0, std::size_t b1, std::vector<int>& labels, bool do_augment,
                         const ChannelStats& stats, std::uint64_t seed, std::size_t epoch) {
    const std::size_t sz = split.image_size;
    Tensor batch({b1 - b0, 3, sz, sz});
    labels.clear();
    for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t s = idx[i];
        Tensor img;
        if (do_augment) {
            // per-sample stream so prefetch order cannot change the draw
            Rng rng(seed * 0x9e3779b97f4a7c15ull + epoch * 0x100000001b3ull + s);
            img = augment(split.images[s], rng, stats);
        } else {
            img = split.images[s];
            standardize(img, stats);
        }
        std::copy(img.data.begin(), img.data.end(),
                  batch.data.begin() + static_cast<long>((i - b0) * 3 * sz * sz));
        labels.push_back(split.labels[s]);
    }
    return batch;
}

inline std::pair<double, double> evaluate(Model& model, const DatasetSplit& split,
                                          const ChannelStats& stats, std::size_t batch_size) {
    double loss_sum = 0.0;
    std::size_t hits = 0;
    std::vector<std::size_t> idx(split.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<int> labels;
    for (std::size_t b0 = 0; b0 < split.size(); b0 += batch_size) {
        const std::size_t b1 = std::min(b0 + batch_size, split.size());
        Tensor batch = make_batch(split, idx, b0, b1, labels, false, stats, 0, 0);
        Tape tape;
        Val x = tape.constant(std::move(batch));
        Val logits = model.forward(tape, x, /*training=*/false);
        Val loss = tape.softmax_cross_entropy(logits, labels);
        loss_sum += tape.value(loss).data[0] * static_cast<double>(b1 - b0);
        const Tensor& lv = tape.value(logits);
        for (std::size_t i = 0; i < b1 - b0; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < lv.shape[1]; ++j)
                if (lv.at2(i, j) > lv.at2(i, best)) best = j;
            if (static_cast<int>(best) == labels[i]) ++hits;
        }
    }
    return {loss_sum / static_cast<double>(split.size()),
            100.0 * static_cast<double>(hits) / static_cast<double>(split.size())};
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace detail

inline void save_model_checkpoint(const std::string& path, Model& model) {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    for (auto* p : model.parameters()) entries.emplace_back(p->name, &p->value);
    std::vector<BatchNormLayer*> bns;
    model.collect_bn(bns);
    for (auto* bn : bns) {
        if (!bn->state.initialized) continue;
        entries.emplace_back(bn->name + ".running_mean", &bn->state.running_mean);
        entries.emplace_back(bn->name + ".running_var", &bn->state.running_var);
    }
    save_container(path, entries);
}

inline void load_model_checkpoint(const std::string& path, Model& model) {
    auto tensors = load_container(path);
    for (auto* p : model.parameters()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end()) throw DataError("checkpoint missing parameter " + p->name);
        if (it->second.shape != p->value.shape)
            throw DataError("checkpoint parameter " + p->name + " has shape " +
                            shape_str(it->second.shape) + ", expected " +
                            shape_str(p->value.shape));
        p->value = it->second;
    }
    std::vector<BatchNormLayer*> bns;
    model.collect_bn(bns);
    for (auto* bn : bns) {
        auto mit = tensors.find(bn->name + ".running_mean");
        auto vit = tensors.find(bn->name + ".running_var");
        if (mit != tensors.end() && vit != tensors.end()) {
            bn->state.running_mean = mit->second;
            bn->state.running_var = vit->second;
            bn->state.initialized = true;
        }
    }
}

// Runs the full recipe. Writes metrics.jsonl (deterministic fields only),
// timing.jsonl (wall time, machine dependent), and best/last checkpoints
// into run_dir when it is non-empty.
inline std::vector<EpochMetrics> train(Model& model, const DatasetSplit& train_split,
                                       const DatasetSplit& val_split, const TrainConfig& cfg,
                                       const std::string& run_dir = "") {
    cfg.validate();
    if (train_split.classes != model.spec.classes)
        throw ConfigError("dataset has " + std::to_string(train_split.classes) +
                          " classes but model expects " + std::to_string(model.spec.classes));
    namespace fs = std::filesystem;
    std::ofstream metrics_out, timing_out;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        metrics_out.open(fs::path(run_dir) / "metrics.jsonl");
        timing_out.open(fs::path(run_dir) / "timing.jsonl");
    }

    const ChannelStats stats = compute_channel_stats(train_split);
    auto params = model.parameters();
    SgdState opt;
    std::vector<EpochMetrics> history;
    double best_val = -1.0;

    std::vector<std::size_t> idx(train_split.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<int> labels;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, cfg);
        Rng shuffle_rng(cfg.seed ^ (0xd1b54a32d192ed03ull + epoch));
        std::shuffle(idx.begin(), idx.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t b0 = 0; b0 < train_split.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(b0 + cfg.batch, train_split.size());
            Tensor batch = detail::make_batch(train_split, idx, b0, b1, labels, cfg.augment, stats,
                                              cfg.seed, epoch);
            Tape tape;
            Val x = tape.constant(std::move(batch));
            Val logits = model.forward(tape, x, /*training=*/true);
            Val loss = tape.softmax_cross_entropy(logits, labels);
            const double lv = tape.value(loss).data[0];
            if (!std::isfinite(lv)) {
                if (!run_dir.empty())
                    save_model_checkpoint((fs::path(run_dir) / "last.ckpt").string(), model);
                throw NumericsError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch));
            }
            loss_sum += lv * static_cast<double>(b1 - b0);
            const Tensor& lg = tape.value(logits);
            for (std::size_t i = 0; i < b1 - b0; ++i) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < lg.shape[1]; ++j)
                    if (lg.at2(i, j) > lg.at2(i, best)) best = j;
                if (static_cast<int>(best) == labels[i]) ++hits;
            }
            for (auto* p : params) p->zero_grad();
            tape.backward(loss);
            sgd_nesterov_step(params, opt, lr, cfg);
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.lr = lr;
        em.train_loss = loss_sum / static_cast<double>(train_split.size());
        em.train_top1 = 100.0 * static_cast<double>(hits) / static_cast<double>(train_split.size());
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            auto [vl, va] = detail::evaluate(model, val_split, stats, cfg.batch);
            em.val_loss = vl;
            em.val_top1 = va;
            if (va > best_val) {
                best_val = va;
                if (!run_dir.empty())
                    save_model_checkpoint((fs::path(run_dir) / "best.ckpt").string(), model);
            }
        }
        em.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(em);

        if (metrics_out.is_open()) {
            metrics_out << "{\"epoch\":" << em.epoch << ",\"lr\":" << detail::fmt_double(em.lr)
                        << ",\"train_loss\":" << detail::fmt_double(em.train_loss)
                        << ",\"train_top1\":" << detail::fmt_double(em.train_top1)
                        << ",\"val_loss\":" << detail::fmt_double(em.val_loss)
                        << ",\"val_top1\":" << detail::fmt_double(em.val_top1) << "}\n";
            metrics_out.flush();
            // wall time lives in a separate file so metrics stay byte-identical
            timing_out << "{\"epoch\":" << em.epoch
                       << ",\"wall_seconds\":" << detail::fmt_double(em.wall_seconds) << "}\n";
            timing_out.flush();
        }
    }
    if (!run_dir.empty())
        save_model_checkpoint((fs::path(run_dir) / "last.ckpt").string(), model);
    return history;
}

}  // namespace phm
