#pragma once

// Parameter, FLOP and latency accounting. FLOPs are reported as 2*MACs;
// the MAC count itself is kept alongside because published budget tables
// for this model family quote multiply-accumulates.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "phmnet/model.hpp"
#include "phmnet/tape.hpp"

namespace phm {

struct LayerBudget {
    std::string name;
    std::size_t params = 0;
    std::uint64_t macs = 0;
};

struct BudgetReport {
    std::string arch;
    std::size_t total_params = 0;
    std::uint64_t total_macs = 0;    // one forward, single image
    std::uint64_t total_flops = 0;   // 2 * MACs
    std::vector<LayerBudget> layers;
    double median_latency_ms = -1.0;  // < 0 until measured
    std::string machine;
    std::size_t backend_phm_n = 0;
};

inline std::size_t layer_param_count(const Layer* layer) {
    std::vector<Parameter*> ps;
    const_cast<Layer*>(layer)->collect_params(ps);
    std::size_t total = 0;
    for (auto* p : ps) total += p->value.size();
    return total;
}

inline BudgetReport analyze_budget(Model& model) {
    BudgetReport r;
    r.arch = model.spec.name;
    r.backend_phm_n = model.backend_n;
    Shape shape = model.stem_input_shape();

    auto add = [&](const std::string& nm, std::size_t params, std::uint64_t macs) {
        r.layers.push_back({nm, params, macs});
        r.total_params += params;
        r.total_macs += macs;
    };

    add(model.stem.conv->name, layer_param_count(model.stem.conv.get()) +
                                   layer_param_count(model.stem.bn.get()),
        model.stem.conv->macs(shape));
    shape = model.stem.conv->out_shape(shape);
    for (auto& b : model.blocks) {
        add(b->name, layer_param_count(b.get()), b->macs(shape));
        shape = b->out_shape(shape);
    }
    add(model.backend->name, layer_param_count(model.backend.get()), model.backend->macs(shape));
    r.total_flops = 2 * r.total_macs;
    return r;
}

inline std::string machine_descriptor() {
    std::string cpu = "unknown-cpu";
    std::ifstream is("/proc/cpuinfo");
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("model name", 0) == 0) {
            auto pos = line.find(':');
            if (pos != std::string::npos) {
                cpu = line.substr(pos + 1);
                while (!cpu.empty() && cpu.front() == ' ') cpu.erase(cpu.begin());
            }
            break;
        }
    }
    return cpu;
}

// Median single-image forward wall time over `reps` timed runs (after a
// couple of warm runs). Hardware dependent; reported, never asserted.
inline void measure_latency(Model& model, BudgetReport& report, std::size_t reps = 11) {
    Tensor input({1, 3, model.spec.input_size, model.spec.input_size});
    for (std::size_t i = 0; i < input.size(); ++i) input.data[i] = 0.1 * ((i * 31 % 17) - 8);
    // make sure batch-norm running stats exist so eval mode works
    {
        Tensor warm({2, 3, model.spec.input_size, model.spec.input_size});
        Tape t;
        model.forward(t, t.constant(warm), /*training=*/true);
    }
    for (int i = 0; i < 2; ++i) {
        Tape t;
        model.forward(t, t.constant(input), false);
    }
    std::vector<double> times;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Tape t;
        model.forward(t, t.constant(input), false);
        times.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
    }
    std::sort(times.begin(), times.end());
    report.median_latency_ms = times[times.size() / 2];
    report.machine = machine_descriptor();
}

inline std::string format_budget(const BudgetReport& r, bool per_layer = false) {
    std::ostringstream os;
    os << "arch: " << r.arch << "\n"
       << "params: " << r.total_params << " (" << static_cast<double>(r.total_params) / 1e6
       << "M)\n"
       << "macs: " << r.total_macs << " (" << static_cast<double>(r.total_macs) / 1e9 << "G)\n"
       << "flops(2*mac): " << r.total_flops << " (" << static_cast<double>(r.total_flops) / 1e9
       << "G)\n";
    if (r.backend_phm_n > 0) os << "backend: phm n=" << r.backend_phm_n << "\n";
    if (r.median_latency_ms >= 0)
        os << "latency_ms(median): " << r.median_latency_ms << "\nmachine: " << r.machine << "\n";
    if (per_layer) {
        for (const auto& l : r.layers)
            os << "  " << l.name << "  params=" << l.params << "  macs=" << l.macs << "\n";
    }
    return os.str();
}

}  // namespace phm
