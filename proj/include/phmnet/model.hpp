#pragma once

// Declarative construction of the ResNet family: real / quaternion /
// vectormap frontends crossed with dense / PHM backends, at the usual
// depth presets.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phmnet/layers.hpp"

namespace phm {

enum class BackendKind { dense, phm, automatic };
enum class BlockKind { basic, bottleneck };

struct ArchitectureSpec {
    std::string name = "custom";
    Algebra algebra = Algebra::real;
    std::size_t vect_dim = 3;
    BlockKind block = BlockKind::basic;
    std::vector<int> multipliers{2, 2, 2, 2};
    std::array<std::size_t, 4> widths{64, 128, 256, 512};
    BackendKind backend = BackendKind::dense;
    std::size_t phm_n = 0;  // 0 = auto-select
    std::size_t classes = 100;
    std::size_t input_size = 32;
    std::size_t widen = 1;

    std::size_t expansion() const { return block == BlockKind::bottleneck ? 4 : 1; }
    std::size_t stage_width(std::size_t i) const { return widths[i] * widen; }
};

struct ConvBN {
    std::unique_ptr<ConvLayer> conv;
    std::unique_ptr<BatchNormLayer> bn;

    Val forward(Tape& t, Val x, bool training) const {
        return bn->forward(t, conv->forward(t, x, training), training);
    }
};

inline ConvBN make_conv_bn(const std::string& nm, Algebra alg, std::size_t vd, std::size_t in_c,
                           std::size_t out_c, std::size_t k, std::size_t stride) {
    ConvBN cb;
    cb.conv = std::make_unique<ConvLayer>(nm + ".conv", alg, vd, in_c, out_c, k, stride,
                                          (k - 1) / 2);
    cb.bn = std::make_unique<BatchNormLayer>(nm + ".bn", out_c);
    return cb;
}

// Residual unit: out = relu(shortcut(x) + body(x)). Basic body is
// 3x3 -> 3x3; bottleneck is 1x1 -> 3x3 -> 1x1 with 4x expansion. The
// projection shortcut uses the same algebra as the body.
class ResidualBlock : public Layer {
public:
    std::vector<ConvBN> body;
    std::optional<ConvBN> shortcut;

    ResidualBlock(const std::string& nm, BlockKind kind, Algebra alg, std::size_t vd,
                  std::size_t in_c, std::size_t width, std::size_t stride) {
        name = nm;
        const std::size_t out_c = kind == BlockKind::bottleneck ? width * 4 : width;
        if (kind == BlockKind::basic) {
            body.push_back(make_conv_bn(nm + ".conv1", alg, vd, in_c, width, 3, stride));
            body.push_back(make_conv_bn(nm + ".conv2", alg, vd, width, width, 3, 1));
        } else {
            body.push_back(make_conv_bn(nm + ".conv1", alg, vd, in_c, width, 1, 1));
            body.push_back(make_conv_bn(nm + ".conv2", alg, vd, width, width, 3, stride));
            body.push_back(make_conv_bn(nm + ".conv3", alg, vd, width, out_c, 1, 1));
        }
        if (stride != 1 || in_c != out_c)
            shortcut = make_conv_bn(nm + ".shortcut", alg, vd, in_c, out_c, 1, stride);
    }

    Val forward(Tape& t, Val x, bool training) override {
        Val h = x;
        for (std::size_t i = 0; i < body.size(); ++i) {
            h = body[i].forward(t, h, training);
            if (i + 1 < body.size()) h = t.relu(h);
        }
        Val s = shortcut ? shortcut->forward(t, x, training) : x;
        return t.relu(t.add(h, s));
    }

    void collect_params(std::vector<Parameter*>& out) override {
        for (auto& cb : body) {
            cb.conv->collect_params(out);
            cb.bn->collect_params(out);
        }
        if (shortcut) {
            shortcut->conv->collect_params(out);
            shortcut->bn->collect_params(out);
        }
    }

    void init(Rng& rng) override {
        for (auto& cb : body) {
            cb.conv->init(rng);
            cb.bn->init(rng);
        }
        if (shortcut) {
            shortcut->conv->init(rng);
            shortcut->bn->init(rng);
        }
    }

    void collect_bn(std::vector<BatchNormLayer*>& out) {
        for (auto& cb : body) out.push_back(cb.bn.get());
        if (shortcut) out.push_back(shortcut->bn.get());
    }

    Shape out_shape(const Shape& in) const override {
        Shape s = in;
        for (auto& cb : body) s = cb.conv->out_shape(s);
        return s;
    }

    std::uint64_t macs(const Shape& in) const override {
        std::uint64_t total = 0;
        Shape s = in;
        for (auto& cb : body) {
            total += cb.conv->macs(s);
            s = cb.conv->out_shape(s);
        }
        if (shortcut) total += shortcut->conv->macs(in);
        return total;
    }
};

// Pick the largest PHM dimension in {5, 4, 2} dividing both widths.
inline std::size_t auto_phm_dim(std::size_t d, std::size_t k) {
    for (std::size_t n : {std::size_t{5}, std::size_t{4}, std::size_t{2}})
        if (d % n == 0 && k % n == 0) return n;
    throw DivisibilityError("no PHM dimension in {5,4,2} divides both feature width " +
                            std::to_string(d) + " and class count " + std::to_string(k) +
                            "; choose N dividing both d and k");
}

class Model {
public:
    ArchitectureSpec spec;
    ConvBN stem;
    std::vector<std::unique_ptr<ResidualBlock>> blocks;
    std::unique_ptr<Layer> backend;  // DenseLayer or PhmLinearLayer
    std::size_t feature_dim = 0;
    std::size_t backend_n = 0;  // 0 for dense backends

    Val forward(Tape& t, Val input, bool training) {
        const Tensor& xv = t.value(input);
        if (xv.ndim() != 4 || xv.shape[1] != 3 || xv.shape[2] != spec.input_size ||
            xv.shape[3] != spec.input_size)
            throw ShapeError("model " + spec.name + ": expected input [N,3," +
                             std::to_string(spec.input_size) + "," +
                             std::to_string(spec.input_size) + "], got " + shape_str(xv.shape));
        Val h = input;
        if (spec.algebra == Algebra::quaternion) h = t.pad_channels(h, 1);
        h = t.relu(stem.forward(t, h, training));
        for (auto& b : blocks) h = b->forward(t, h, training);
        h = t.global_avg_pool(h);
        return backend->forward(t, h, training);
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        stem.conv->collect_params(out);
        stem.bn->collect_params(out);
        for (auto& b : blocks) b->collect_params(out);
        backend->collect_params(out);
        return out;
    }

    void init(std::uint64_t seed) {
        Rng rng(seed);
        stem.conv->init(rng);
        stem.bn->init(rng);
        for (auto& b : blocks) b->init(rng);
        backend->init(rng);
    }

    void collect_bn(std::vector<BatchNormLayer*>& out) {
        out.push_back(stem.bn.get());
        for (auto& b : blocks) b->collect_bn(out);
    }

    std::size_t param_count() {
        std::size_t total = 0;
        for (auto* p : parameters()) total += p->value.size();
        return total;
    }

    // layers in forward order, for budget walks
    std::vector<const Layer*> top_layers() const {
        std::vector<const Layer*> out;
        out.push_back(stem.conv.get());
        for (auto& b : blocks) out.push_back(b.get());
        out.push_back(backend.get());
        return out;
    }

    Shape stem_input_shape() const {
        const std::size_t c = spec.algebra == Algebra::quaternion ? 4 : 3;
        return {1, c, spec.input_size, spec.input_size};
    }
};

inline Model build_model(const ArchitectureSpec& spec, std::uint64_t seed = 0) {
    if (spec.multipliers.size() != 4)
        throw ConfigError("architecture needs four stage multipliers");
    if (spec.classes < 2) throw ConfigError("class count must be >= 2");
    Model m;
    m.spec = spec;
    const std::size_t vd = spec.vect_dim;
    const std::size_t stem_in = spec.algebra == Algebra::quaternion ? 4 : 3;
    m.stem = make_conv_bn("stem", spec.algebra, vd, stem_in, spec.stage_width(0), 3, 1);

    std::size_t in_c = spec.stage_width(0);
    for (std::size_t stage = 0; stage < 4; ++stage) {
        const std::size_t width = spec.stage_width(stage);
        for (int b = 0; b < spec.multipliers[stage]; ++b) {
            const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
            std::string nm = "stage" + std::to_string(stage + 1) + ".block" + std::to_string(b);
            m.blocks.push_back(std::make_unique<ResidualBlock>(nm, spec.block, spec.algebra, vd,
                                                               in_c, width, stride));
            in_c = spec.block == BlockKind::bottleneck ? width * 4 : width;
        }
    }
    m.feature_dim = in_c;

    BackendKind kind = spec.backend;
    if (kind == BackendKind::automatic)
        kind = spec.algebra == Algebra::real ? BackendKind::dense : BackendKind::phm;
    if (kind == BackendKind::dense) {
        m.backend = std::make_unique<DenseLayer>("head", m.feature_dim, spec.classes);
    } else {
        std::size_t n = spec.phm_n;
        if (n == 0) n = auto_phm_dim(m.feature_dim, spec.classes);
        m.backend = std::make_unique<PhmLinearLayer>("head", n, m.feature_dim, spec.classes);
        m.backend_n = n;
    }
    m.init(seed);
    return m;
}

// Named presets matching the experiment tables: families resnet / rphm /
// quat / qphm / vect / vphm at depths 18, 26, 34, 35, 50.
inline ArchitectureSpec preset_architecture(const std::string& arch) {
    ArchitectureSpec s;
    s.name = arch;
    std::string family;
    int depth = 0;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(arch[i]))) {
            family = arch.substr(0, i);
            depth = std::stoi(arch.substr(i));
            break;
        }
    }
    if (family == "resnet" || family == "rphm") {
        s.algebra = Algebra::real;
        s.widths = {64, 128, 256, 512};
    } else if (family == "quat" || family == "qphm") {
        s.algebra = Algebra::quaternion;
        s.widths = {112, 224, 448, 896};
    } else if (family == "vect" || family == "vphm") {
        s.algebra = Algebra::vectormap;
        s.vect_dim = 3;
        s.widths = {90, 180, 360, 720};
    } else {
        throw ConfigError("unknown architecture '" + arch + "'");
    }
    s.backend = (family == "rphm" || family == "qphm" || family == "vphm") ? BackendKind::phm
                                                                           : BackendKind::dense;
    switch (depth) {
        case 18: s.block = BlockKind::basic; s.multipliers = {2, 2, 2, 2}; break;
        case 34: s.block = BlockKind::basic; s.multipliers = {3, 4, 6, 3}; break;
        case 26: s.block = BlockKind::bottleneck; s.multipliers = {1, 2, 4, 1}; break;
        case 35: s.block = BlockKind::bottleneck; s.multipliers = {2, 3, 4, 2}; break;
        case 50: s.block = BlockKind::bottleneck; s.multipliers = {3, 4, 6, 3}; break;
        default: throw ConfigError("unsupported depth in architecture '" + arch + "'");
    }
    return s;
}

}  // namespace phm
