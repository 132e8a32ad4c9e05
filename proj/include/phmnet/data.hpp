#pragma once

// Dataset ingestion: CIFAR-10/100 binary files, the standard pad-crop-flip
// augmentation with per-channel standardization, and a deterministic
// synthetic dataset for desk-scale runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "phmnet/checkpoint.hpp"
#include "phmnet/layers.hpp"
#include "phmnet/tensor.hpp"

namespace phm {

struct DatasetSplit {
    std::string tag;  // "train" or "val"
    std::size_t classes = 0;
    std::size_t image_size = 32;
    std::vector<Tensor> images;  // each [3,H,W], values in [0,1] (raw) or standardized
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

struct ChannelStats {
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> stddev{1, 1, 1};
};

inline ChannelStats compute_channel_stats(const DatasetSplit& split) {
    ChannelStats st;
    std::array<double, 3> sum{0, 0, 0}, sumsq{0, 0, 0};
    std::size_t count = 0;
    for (const auto& img : split.images) {
        const std::size_t plane = img.shape[1] * img.shape[2];
        for (std::size_t c = 0; c < 3; ++c) {
            const double* p = img.data.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sumsq[c] += p[i] * p[i];
            }
        }
        count += plane;
    }
    for (std::size_t c = 0; c < 3; ++c) {
        st.mean[c] = sum[c] / static_cast<double>(count);
        const double var = sumsq[c] / static_cast<double>(count) - st.mean[c] * st.mean[c];
        st.stddev[c] = std::sqrt(std::max(var, 1e-12));
    }
    return st;
}

inline void standardize(Tensor& img, const ChannelStats& st) {
    const std::size_t plane = img.shape[1] * img.shape[2];
    for (std::size_t c = 0; c < 3; ++c) {
        double* p = img.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - st.mean[c]) / st.stddev[c];
    }
}

inline Tensor hflip(const Tensor& img) {
    const std::size_t h = img.shape[1], w = img.shape[2];
    Tensor out(img.shape);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out.data[(c * h + i) * w + j] = img.data[(c * h + i) * w + (w - 1 - j)];
    return out;
}

// zero-pad 4 on each side, random crop back to the original size,
// horizontal flip with p = 0.5
inline Tensor random_crop_flip(const Tensor& img, Rng& rng, std::size_t pad = 4) {
    const std::size_t h = img.shape[1], w = img.shape[2];
    std::uniform_int_distribution<std::size_t> doff(0, 2 * pad);
    const std::size_t dy = doff(rng), dx = doff(rng);
    const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    Tensor out({3, h, w});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const long si = static_cast<long>(i + dy) - static_cast<long>(pad);
                long sj = static_cast<long>(flip ? w - 1 - j : j);
                sj += static_cast<long>(dx) - static_cast<long>(pad);
                double v = 0.0;
                if (si >= 0 && si < static_cast<long>(h) && sj >= 0 && sj < static_cast<long>(w))
                    v = img.data[(c * h + static_cast<std::size_t>(si)) * w +
                                 static_cast<std::size_t>(sj)];
                out.data[(c * h + i) * w + j] = v;
            }
    return out;
}

inline Tensor augment(const Tensor& img, Rng& rng, const ChannelStats& st) {
    Tensor out = random_crop_flip(img, rng);
    standardize(out, st);
    return out;
}

// ---- CIFAR binary formats ----

enum class CifarVariant { c10, c100 };

namespace detail {
inline void load_cifar_file(const std::filesystem::path& file, CifarVariant variant,
                            DatasetSplit& split) {
    const std::size_t record = variant == CifarVariant::c10 ? 1 + 3072 : 2 + 3072;
    std::error_code ec;
    const auto fsize = std::filesystem::file_size(file, ec);
    if (ec) throw DataError("cifar: missing file " + file.string());
    if (fsize == 0 || fsize % record != 0)
        throw DataError("cifar: corrupt file " + file.string() + ": size " +
                        std::to_string(fsize) + " is not a multiple of record size " +
                        std::to_string(record));
    std::ifstream is(file, std::ios::binary);
    if (!is) throw DataError("cifar: cannot open " + file.string());
    std::vector<unsigned char> buf(record);
    const std::size_t count = fsize / record;
    for (std::size_t r = 0; r < count; ++r) {
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record));
        if (!is) throw DataError("cifar: truncated read in " + file.string());
        // CIFAR-100 records carry coarse then fine label; the fine one is used
        const int label = variant == CifarVariant::c10 ? buf[0] : buf[1];
        const std::size_t off = variant == CifarVariant::c10 ? 1 : 2;
        Tensor img({3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i)
            img.data[i] = static_cast<double>(buf[off + i]) / 255.0;
        split.images.push_back(std::move(img));
        split.labels.push_back(label);
    }
}
}  // namespace detail

inline std::pair<DatasetSplit, DatasetSplit> load_cifar(const std::string& root,
                                                        CifarVariant variant) {
    namespace fs = std::filesystem;
    DatasetSplit train, val;
    train.tag = "train";
    val.tag = "val";
    train.classes = val.classes = variant == CifarVariant::c10 ? 10 : 100;
    const fs::path dir(root);
    if (variant == CifarVariant::c10) {
        for (int i = 1; i <= 5; ++i)
            detail::load_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), variant,
                                    train);
        detail::load_cifar_file(dir / "test_batch.bin", variant, val);
    } else {
        detail::load_cifar_file(dir / "train.bin", variant, train);
        detail::load_cifar_file(dir / "test.bin", variant, val);
    }
    if (train.size() != 50000 || val.size() != 10000)
        throw DataError("cifar: expected 50000 train / 10000 test records, got " +
                        std::to_string(train.size()) + " / " + std::to_string(val.size()));
    return {std::move(train), std::move(val)};
}

// ---- synthetic desk-scale dataset ----

namespace detail {
inline std::array<double, 3> hue_to_rgb(double hue) {
    const double h6 = hue * 6.0;
    const double x = 1.0 - std::fabs(std::fmod(h6, 2.0) - 1.0);
    switch (static_cast<int>(h6) % 6) {
        case 0: return {1, x, 0};
        case 1: return {x, 1, 0};
        case 2: return {0, 1, x};
        case 3: return {0, x, 1};
        case 4: return {x, 0, 1};
        default: return {1, 0, x};
    }
}

inline DatasetSplit synth_split(const char* tag, std::size_t classes, std::size_t per_class,
                                std::size_t size, double noise, Rng& rng) {
    DatasetSplit split;
    split.tag = tag;
    split.classes = classes;
    split.image_size = size;
    std::normal_distribution<double> jitter(0.0, 0.04 * static_cast<double>(size));
    std::normal_distribution<double> pix_noise(0.0, noise);
    const double sigma = static_cast<double>(size) / 6.0;
    for (std::size_t c = 0; c < classes; ++c) {
        const auto rgb = hue_to_rgb(static_cast<double>(c) / static_cast<double>(classes));
        const double ang = 6.283185307179586 * static_cast<double>(c) / static_cast<double>(classes);
        const double cx0 = 0.5 * size + 0.28 * size * std::cos(ang);
        const double cy0 = 0.5 * size + 0.28 * size * std::sin(ang);
        for (std::size_t s = 0; s < per_class; ++s) {
            const double cx = cx0 + jitter(rng), cy = cy0 + jitter(rng);
            Tensor img({3, size, size});
            for (std::size_t i = 0; i < size; ++i)
                for (std::size_t j = 0; j < size; ++j) {
                    const double d2 = (static_cast<double>(i) - cy) * (static_cast<double>(i) - cy) +
                                      (static_cast<double>(j) - cx) * (static_cast<double>(j) - cx);
                    const double blob = std::exp(-d2 / (2.0 * sigma * sigma));
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        double v = 0.1 + 0.85 * rgb[ch] * blob + pix_noise(rng);
                        img.data[(ch * size + i) * size + j] = std::clamp(v, 0.0, 1.0);
                    }
                }
            split.images.push_back(std::move(img));
            split.labels.push_back(static_cast<int>(c));
        }
    }
    return split;
}
}  // namespace detail

// Fraction of samples a nearest-centroid classifier (centroids from `ref`)
// gets right on `eval`, in raw pixel space.
inline double nearest_centroid_accuracy(const DatasetSplit& ref, const DatasetSplit& eval_split) {
    const std::size_t npix = ref.images[0].size();
    std::vector<std::vector<double>> centroid(ref.classes, std::vector<double>(npix, 0.0));
    std::vector<std::size_t> count(ref.classes, 0);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const auto c = static_cast<std::size_t>(ref.labels[i]);
        ++count[c];
        for (std::size_t p = 0; p < npix; ++p) centroid[c][p] += ref.images[i].data[p];
    }
    for (std::size_t c = 0; c < ref.classes; ++c)
        if (count[c])
            for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < eval_split.size(); ++i) {
        double best = 0.0;
        int best_c = -1;
        for (std::size_t c = 0; c < ref.classes; ++c) {
            double d2 = 0.0;
            for (std::size_t p = 0; p < npix; ++p) {
                const double d = eval_split.images[i].data[p] - centroid[c][p];
                d2 += d * d;
            }
            if (best_c < 0 || d2 < best) {
                best = d2;
                best_c = static_cast<int>(c);
            }
        }
        if (best_c == eval_split.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(eval_split.size());
}

// Class-conditional colored blobs. Regenerates with less noise until a
// nearest-centroid classifier separates the train split (> 60%).
inline std::pair<DatasetSplit, DatasetSplit> make_synthetic(std::size_t classes,
                                                            std::size_t per_class,
                                                            std::size_t size,
                                                            std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    double noise = 0.12;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Rng rng(seed + static_cast<std::uint64_t>(attempt) * 0x9e3779b97f4a7c15ull);
        DatasetSplit train = detail::synth_split("train", classes, per_class, size, noise, rng);
        DatasetSplit val = detail::synth_split("val", classes, std::max<std::size_t>(per_class / 2, 1),
                                               size, noise, rng);
        if (nearest_centroid_accuracy(train, train) > 0.6) return {std::move(train), std::move(val)};
        noise *= 0.5;
    }
    throw NumericsError("synthetic dataset failed to separate after noise reduction");
}

// ---- serialization in the container format ----

inline void save_dataset(const std::string& path, const DatasetSplit& split) {
    const std::size_t n = split.size();
    const std::size_t sz = split.image_size;
    Tensor images({n, 3, sz, sz});
    Tensor labels({n});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(split.images[i].data.begin(), split.images[i].data.end(),
                  images.data.begin() + static_cast<long>(i * 3 * sz * sz));
        labels.data[i] = split.labels[i];
    }
    Tensor meta({2}, {static_cast<double>(split.classes), static_cast<double>(sz)});
    save_container(path, {{"images", &images}, {"labels", &labels}, {"meta", &meta}});
}

inline DatasetSplit load_dataset(const std::string& path, std::string tag = "train") {
    auto m = load_container(path);
    const Tensor& images = m.at("images");
    const Tensor& labels = m.at("labels");
    const Tensor& meta = m.at("meta");
    DatasetSplit split;
    split.tag = std::move(tag);
    split.classes = static_cast<std::size_t>(meta.data[0]);
    split.image_size = static_cast<std::size_t>(meta.data[1]);
    const std::size_t n = images.shape[0], sz = images.shape[2];
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img({3, sz, sz});
        std::copy_n(images.data.begin() + static_cast<long>(i * 3 * sz * sz), 3 * sz * sz,
                    img.data.begin());
        split.images.push_back(std::move(img));
        split.labels.push_back(static_cast<int>(labels.data[i]));
    }
    return split;
}

}  // namespace phm
