// phm: experiment driver for the hypercomplex ResNet library.
//
// Subcommands: train, verify, analyze, gradcheck. Exit codes are a stable
// contract: 0 success, 1 verification failure, 2 configuration error,
// 3 runtime divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "phmnet/analysis.hpp"
#include "phmnet/data.hpp"
#include "phmnet/gradcheck.hpp"
#include "phmnet/model.hpp"
#include "phmnet/oracles.hpp"
#include "phmnet/train.hpp"
#include "phmnet/verify.hpp"

namespace {

constexpr const char* kDataRootEnv = "PHM_DATA_ROOT";

std::string fmt(double v) { return phm::detail::fmt_double(v); }

// Canonical key=value rendering of a resolved configuration. The same
// string is echoed to stdout and written into the run directory, and it
// parses back through --config to the identical configuration.
std::string render_config(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
}

void echo_config(const std::string& rendered) {
    std::istringstream is(rendered);
    std::string line;
    while (std::getline(is, line)) std::cout << "config: " << line << "\n";
}

struct TrainArgs {
    std::string config;  // optional key=value file, applied below the flags
    std::string arch = "qphm18";
    std::string dataset = "synthetic";
    std::string data_root;
    std::size_t classes = 0;  // 0 = from dataset
    std::size_t epochs = 120;
    std::size_t batch = 100;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t warmup = 10;
    std::string schedule = "cosine";
    std::uint64_t seed = 1;
    bool deterministic = true;
    std::string run_dir;
    std::size_t widen = 1;
    std::size_t phm_n = 0;
    std::size_t synth_per_class = 20;
    std::size_t image_size = 32;
    int augment = -1;  // -1 auto: on for cifar, off for synthetic
};

std::vector<std::pair<std::string, std::string>> train_kv(const TrainArgs& a) {
    return {{"arch", a.arch},
            {"dataset", a.dataset},
            {"data-root", a.data_root},
            {"classes", std::to_string(a.classes)},
            {"epochs", std::to_string(a.epochs)},
            {"batch", std::to_string(a.batch)},
            {"lr", fmt(a.lr)},
            {"momentum", fmt(a.momentum)},
            {"weight-decay", fmt(a.weight_decay)},
            {"warmup", std::to_string(a.warmup)},
            {"schedule", a.schedule},
            {"seed", std::to_string(a.seed)},
            {"deterministic", a.deterministic ? "true" : "false"},
            {"run-dir", a.run_dir},
            {"widen", std::to_string(a.widen)},
            {"phm-n", std::to_string(a.phm_n)},
            {"synth-per-class", std::to_string(a.synth_per_class)},
            {"image-size", std::to_string(a.image_size)},
            {"augment", std::to_string(a.augment)}};
}

// Applies one key=value assignment from a config file. Returns false for
// unknown keys.
bool assign_train_key(TrainArgs& a, const std::string& key, const std::string& val) {
    auto to_u64 = [&](auto& dst) { dst = std::stoull(val); };
    auto to_int = [&](int& dst) { dst = std::stoi(val); };
    auto to_dbl = [&](double& dst) { dst = std::stod(val); };
    auto to_bool = [&](bool& dst) {
        if (val == "true" || val == "1")
            dst = true;
        else if (val == "false" || val == "0")
            dst = false;
        else
            throw phm::ConfigError("config: expected true/false for '" + key + "', got '" + val +
                                   "'");
    };
    try {
        if (key == "arch") a.arch = val;
        else if (key == "dataset") a.dataset = val;
        else if (key == "data-root") a.data_root = val;
        else if (key == "classes") to_u64(a.classes);
        else if (key == "epochs") to_u64(a.epochs);
        else if (key == "batch") to_u64(a.batch);
        else if (key == "lr") to_dbl(a.lr);
        else if (key == "momentum") to_dbl(a.momentum);
        else if (key == "weight-decay") to_dbl(a.weight_decay);
        else if (key == "warmup") to_u64(a.warmup);
        else if (key == "schedule") a.schedule = val;
        else if (key == "seed") to_u64(a.seed);
        else if (key == "deterministic") to_bool(a.deterministic);
        else if (key == "run-dir") a.run_dir = val;
        else if (key == "widen") to_u64(a.widen);
        else if (key == "phm-n") to_u64(a.phm_n);
        else if (key == "synth-per-class") to_u64(a.synth_per_class);
        else if (key == "image-size") to_u64(a.image_size);
        else if (key == "augment") to_int(a.augment);
        else return false;
    } catch (const std::invalid_argument&) {
        throw phm::ConfigError("config: bad value '" + val + "' for '" + key + "'");
    } catch (const std::out_of_range&) {
        throw phm::ConfigError("config: value out of range for '" + key + "'");
    }
    return true;
}

void apply_config_file(TrainArgs& a, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw phm::ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto pos = line.find('=');
        if (pos == std::string::npos)
            throw phm::ConfigError("config " + path + ":" + std::to_string(lineno) +
                                   ": expected key=value");
        const std::string key = line.substr(0, pos);
        if (!assign_train_key(a, key, line.substr(pos + 1)))
            throw phm::ConfigError("config " + path + ":" + std::to_string(lineno) +
                                   ": unknown key '" + key + "'");
    }
}

int cmd_train(const TrainArgs& a) {
    const std::string rendered = render_config(train_kv(a));
    echo_config(rendered);

    std::string root = a.data_root;
    if (root.empty())
        if (const char* env = std::getenv(kDataRootEnv)) root = env;

    std::size_t classes, image_size;
    if (a.dataset == "synthetic") {
        classes = a.classes ? a.classes : 10;
        image_size = a.image_size;
    } else if (a.dataset == "cifar10" || a.dataset == "cifar100") {
        const std::size_t native = a.dataset == "cifar10" ? 10 : 100;
        if (a.classes && a.classes != native)
            throw phm::ConfigError("--classes " + std::to_string(a.classes) +
                                   " conflicts with " + a.dataset);
        if (root.empty())
            throw phm::ConfigError("dataset " + a.dataset + " needs --data-root or $" +
                                   std::string(kDataRootEnv));
        classes = native;
        image_size = 32;
    } else {
        throw phm::ConfigError("unknown dataset '" + a.dataset +
                               "' (expected cifar10, cifar100 or synthetic)");
    }

    // fail on architecture problems before spending time on data
    phm::ArchitectureSpec spec = phm::preset_architecture(a.arch);
    spec.classes = classes;
    spec.input_size = image_size;
    spec.widen = a.widen;
    if (a.phm_n) spec.phm_n = a.phm_n;
    phm::Model model = phm::build_model(spec, a.seed);

    phm::DatasetSplit train_split, val_split;
    if (a.dataset == "synthetic") {
        auto [tr, va] = phm::make_synthetic(classes, a.synth_per_class, a.image_size, a.seed);
        train_split = std::move(tr);
        val_split = std::move(va);
    } else {
        auto [tr, va] = phm::load_cifar(
            root, a.dataset == "cifar10" ? phm::CifarVariant::c10 : phm::CifarVariant::c100);
        train_split = std::move(tr);
        val_split = std::move(va);
    }
    if (model.backend_n)
        std::cout << "model: " << spec.name << " (" << model.param_count()
                  << " params, phm backend n=" << model.backend_n << ")\n";
    else
        std::cout << "model: " << spec.name << " (" << model.param_count()
                  << " params, dense backend)\n";

    phm::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.weight_decay = a.weight_decay;
    cfg.warmup_epochs = std::min(a.warmup, a.epochs > 1 ? a.epochs - 1 : std::size_t{0});
    cfg.schedule = a.schedule;
    cfg.seed = a.seed;
    cfg.deterministic = a.deterministic;
    cfg.augment = a.augment < 0 ? a.dataset != "synthetic" : a.augment != 0;
    cfg.validate();

    if (!a.run_dir.empty()) {
        std::filesystem::create_directories(a.run_dir);
        std::ofstream cf(std::filesystem::path(a.run_dir) / "config.txt", std::ios::binary);
        cf << rendered;
    }

    const auto history = phm::train(model, train_split, val_split, cfg, a.run_dir);
    for (const auto& em : history)
        std::cout << "epoch " << em.epoch << "  lr " << fmt(em.lr) << "  train_loss "
                  << fmt(em.train_loss) << "  train_top1 " << fmt(em.train_top1)
                  << "  val_top1 " << fmt(em.val_top1) << "\n";
    return 0;
}

// Randomized layer equivalences against the naive reference path.
std::vector<phm::CheckResult> run_layer_oracles(std::size_t trials) {
    std::vector<phm::CheckResult> out;
    phm::Rng rng(777);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto randomize = [&](phm::Tensor& t) {
        for (auto& v : t.data) v = dist(rng);
    };
    auto max_rel = [](const phm::Tensor& a, const phm::Tensor& b) {
        double worst = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = std::fabs(a.data[i] - b.data[i]);
            const double s = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), 1e-8});
            worst = std::max(worst, d / s);
        }
        return worst;
    };

    double worst_q = 0, worst_v = 0, worst_p = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        {
            phm::ConvLayer layer("q", phm::Algebra::quaternion, 4, 8, 4, 3, 1, 1);
            layer.init(rng);
            phm::Tensor x({2, 8, 5, 5});
            randomize(x);
            phm::Tape tape;
            phm::Val y = layer.forward(tape, tape.constant(x), false);
            std::vector<phm::Tensor> ks;
            for (auto& kp : layer.kernels) ks.push_back(kp.value);
            const phm::Tensor o16 = phm::oracle::quaternion_conv2d_16(x, ks, layer.spec);
            const phm::Tensor obm = phm::oracle::quaternion_conv2d_blockmat(x, ks, layer.spec);
            worst_q = std::max({worst_q, max_rel(tape.value(y), o16), max_rel(o16, obm)});
        }
        {
            phm::ConvLayer layer("v", phm::Algebra::vectormap, 3, 6, 6, 3, 1, 1);
            layer.init(rng);
            for (auto& v : layer.lmat.value.data) v += 0.3 * dist(rng);
            phm::Tensor x({2, 6, 5, 5});
            randomize(x);
            phm::Tape tape;
            phm::Val y = layer.forward(tape, tape.constant(x), false);
            std::vector<phm::Tensor> ks;
            for (auto& kp : layer.kernels) ks.push_back(kp.value);
            const phm::Tensor ref =
                phm::oracle::vectormap_conv2d_groups(x, ks, layer.lmat.value, layer.spec);
            worst_v = std::max(worst_v, max_rel(tape.value(y), ref));
        }
        {
            const std::size_t n = (t % 2 == 0) ? 4 : 5;
            phm::PhmLinearLayer layer("p", n, 2 * n, n);
            layer.init(rng);
            randomize(layer.bias.value);
            phm::Tensor x({3, 2 * n});
            randomize(x);
            phm::Tape tape;
            phm::Val y = layer.forward(tape, tape.constant(x), false);
            std::vector<phm::Tensor> ss;
            for (auto& s : layer.s_blocks) ss.push_back(s.value);
            const phm::Tensor ref =
                phm::oracle::phm_linear_expand(x, layer.signs, ss, layer.bias.value);
            worst_p = std::max(worst_p, max_rel(tape.value(y), ref));
        }
    }
    auto add = [&](const std::string& nm, double worst) {
        std::ostringstream os;
        os << "max rel err " << worst;
        out.push_back({nm, worst < 1e-10, os.str()});
    };
    add("oracle: quaternion conv = 16-conv expansion = block-matrix expansion", worst_q);
    add("oracle: vectormap conv = per-group loop", worst_v);
    add("oracle: phm linear = materialized-H product", worst_p);
    return out;
}

int cmd_verify(std::size_t trials) {
    std::vector<std::pair<std::string, std::string>> kv{{"trials", std::to_string(trials)}};
    echo_config(render_config(kv));
    auto results = phm::run_verification();
    auto layer = run_layer_oracles(trials);
    results.insert(results.end(), layer.begin(), layer.end());

    std::size_t failed = 0;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[pass] " : "[FAIL] ") << r.name;
        if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
        std::cout << "\n";
        if (!r.pass) ++failed;
    }
    std::cout << phm::verify_eq7_reproduction().text << "\n";
    if (failed) {
        std::cout << failed << " check(s) failed\n";
        return 1;
    }
    std::cout << "all " << results.size() << " checks passed\n";
    return 0;
}

struct AnalyzeArgs {
    std::string arch;
    std::size_t classes = 100;
    std::size_t widen = 1;
    std::size_t phm_n = 0;
    int compare = 0;  // depth; 0 = single-arch mode
    bool latency = false;
    bool per_layer = false;
};

phm::BudgetReport budget_for(const std::string& arch, const AnalyzeArgs& a) {
    phm::ArchitectureSpec spec = phm::preset_architecture(arch);
    spec.classes = a.classes;
    spec.widen = a.widen;
    if (a.phm_n) spec.phm_n = a.phm_n;
    phm::Model model = phm::build_model(spec);
    phm::BudgetReport r = phm::analyze_budget(model);
    if (a.latency) phm::measure_latency(model, r);
    return r;
}

int cmd_analyze(const AnalyzeArgs& a) {
    echo_config(render_config({{"arch", a.arch},
                               {"classes", std::to_string(a.classes)},
                               {"widen", std::to_string(a.widen)},
                               {"phm-n", std::to_string(a.phm_n)},
                               {"compare", std::to_string(a.compare)},
                               {"latency", a.latency ? "true" : "false"}}));
    if (a.compare) {
        std::printf("%-10s %12s %14s %14s %8s\n", "arch", "params", "macs", "flops", "phm-n");
        for (const char* fam : {"resnet", "quat", "vect", "rphm", "qphm", "vphm"}) {
            const std::string arch = std::string(fam) + std::to_string(a.compare);
            const phm::BudgetReport r = budget_for(arch, a);
            std::printf("%-10s %12zu %14llu %14llu %8s\n", arch.c_str(), r.total_params,
                        static_cast<unsigned long long>(r.total_macs),
                        static_cast<unsigned long long>(r.total_flops),
                        r.backend_phm_n ? std::to_string(r.backend_phm_n).c_str() : "-");
        }
        return 0;
    }
    if (a.arch.empty()) throw phm::ConfigError("analyze needs --arch or --compare");
    std::cout << phm::format_budget(budget_for(a.arch, a), a.per_layer);
    return 0;
}

struct GradcheckArgs {
    std::string menu = "phm4,phm5,quatconv,vectconv,block";
    double eps = 1e-5;
    double threshold = 1e-5;
    std::uint64_t seed = 3;
};

phm::GradReport check_params(std::vector<phm::Parameter*> params,
                             const std::function<phm::Val(phm::Tape&)>& build, double eps) {
    auto loss_value = [&]() {
        phm::Tape t;
        return t.value(build(t)).data[0];
    };
    auto loss_backward = [&]() {
        phm::Tape t;
        t.backward(build(t));
    };
    return phm::grad_check(params, loss_value, loss_backward, eps);
}

int cmd_gradcheck(const GradcheckArgs& a) {
    echo_config(render_config({{"menu", a.menu},
                               {"eps", fmt(a.eps)},
                               {"threshold", fmt(a.threshold)},
                               {"seed", std::to_string(a.seed)}}));
    phm::Rng rng(a.seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto randomize = [&](phm::Tensor& t) {
        for (auto& v : t.data) v = dist(rng);
    };

    std::vector<std::string> items;
    {
        std::stringstream ss(a.menu);
        std::string tok;
        while (std::getline(ss, tok, ',')) items.push_back(tok);
    }

    bool ok = true;
    for (const std::string& item : items) {
        phm::GradReport rep;
        if (item == "phm4" || item == "phm5") {
            const std::size_t n = item == "phm4" ? 4 : 5;
            phm::PhmLinearLayer layer("phm", n, 2 * n, n);
            layer.init(rng);
            randomize(layer.bias.value);
            phm::Tensor x({2, 2 * n});
            randomize(x);
            std::vector<phm::Parameter*> ps;
            layer.collect_params(ps);
            rep = check_params(ps,
                              [&](phm::Tape& t) {
                                  return t.sum_squares(layer.forward(t, t.constant(x), false));
                              },
                              a.eps);
        } else if (item == "quatconv") {
            phm::ConvLayer layer("qc", phm::Algebra::quaternion, 4, 4, 4, 3, 1, 1);
            layer.init(rng);
            phm::Tensor x({2, 4, 5, 5});
            randomize(x);
            std::vector<phm::Parameter*> ps;
            layer.collect_params(ps);
            rep = check_params(ps,
                              [&](phm::Tape& t) {
                                  return t.sum_squares(layer.forward(t, t.constant(x), false));
                              },
                              a.eps);
        } else if (item == "vectconv") {
            phm::ConvLayer layer("vc", phm::Algebra::vectormap, 3, 3, 3, 3, 1, 1);
            layer.init(rng);
            phm::Tensor x({2, 3, 5, 5});
            randomize(x);
            std::vector<phm::Parameter*> ps;
            layer.collect_params(ps);
            rep = check_params(ps,
                              [&](phm::Tape& t) {
                                  return t.sum_squares(layer.forward(t, t.constant(x), false));
                              },
                              a.eps);
        } else if (item == "block") {
            // full bottleneck unit, batch norm in eval mode (running stats
            // seeded by one training-mode pass first)
            phm::ResidualBlock block("blk", phm::BlockKind::bottleneck, phm::Algebra::quaternion,
                                     3, 8, 8, 1);
            phm::Rng irng(a.seed + 1);
            block.init(irng);
            phm::Tensor x({2, 8, 4, 4});
            randomize(x);
            {
                phm::Tape t;
                block.forward(t, t.constant(x), true);
            }
            std::vector<phm::Parameter*> ps;
            block.collect_params(ps);
            rep = check_params(ps,
                              [&](phm::Tape& t) {
                                  return t.sum_squares(block.forward(t, t.constant(x), false));
                              },
                              a.eps);
        } else {
            throw phm::ConfigError("unknown gradcheck item '" + item +
                                   "' (expected phm4, phm5, quatconv, vectconv, block)");
        }
        const bool pass = rep.max_rel_error <= a.threshold;
        std::cout << (pass ? "[pass] " : "[FAIL] ") << item << "  max_rel_error "
                  << rep.max_rel_error << "  eps " << rep.eps << "  threshold " << a.threshold;
        if (!pass) std::cout << "  worst " << rep.worst_param;
        std::cout << "\n";
        ok = ok && pass;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hypercomplex ResNet experiments"};
    app.require_subcommand(1);

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", ta.config, "key=value config file (flags take precedence)");
    train->add_option("--arch", ta.arch, "architecture preset");
    train->add_option("--dataset", ta.dataset, "cifar10 | cifar100 | synthetic");
    train->add_option("--data-root", ta.data_root, "CIFAR binary directory");
    train->add_option("--classes", ta.classes, "class count (0 = from dataset)");
    train->add_option("--epochs", ta.epochs);
    train->add_option("--batch", ta.batch);
    train->add_option("--lr", ta.lr);
    train->add_option("--momentum", ta.momentum);
    train->add_option("--weight-decay", ta.weight_decay);
    train->add_option("--warmup", ta.warmup, "warmup epochs");
    train->add_option("--schedule", ta.schedule, "cosine | linear");
    train->add_option("--seed", ta.seed);
    train->add_option("--deterministic", ta.deterministic);
    train->add_option("--run-dir", ta.run_dir, "output directory for metrics and checkpoints");
    train->add_option("--widen", ta.widen, "width multiplier");
    train->add_option("--phm-n", ta.phm_n, "PHM dimension (0 = auto)");
    train->add_option("--synth-per-class", ta.synth_per_class);
    train->add_option("--image-size", ta.image_size, "synthetic image size");
    train->add_option("--augment", ta.augment, "1 on, 0 off, -1 auto");

    std::size_t verify_trials = 100;
    CLI::App* verify = app.add_subcommand("verify", "run the algebra and layer identity suite");
    verify->add_option("--trials", verify_trials, "random instances per layer oracle");

    AnalyzeArgs aa;
    CLI::App* analyze = app.add_subcommand("analyze", "parameter / FLOP / latency budgets");
    analyze->add_option("--arch", aa.arch);
    analyze->add_option("--classes", aa.classes);
    analyze->add_option("--widen", aa.widen);
    analyze->add_option("--phm-n", aa.phm_n);
    analyze->add_option("--compare", aa.compare, "compare all families at this depth");
    analyze->add_flag("--latency", aa.latency, "measure median forward latency");
    analyze->add_flag("--per-layer", aa.per_layer, "print per-layer rows");

    GradcheckArgs ga;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck->add_option("--menu", ga.menu, "comma-separated items");
    gradcheck->add_option("--eps", ga.eps);
    gradcheck->add_option("--threshold", ga.threshold);
    gradcheck->add_option("--seed", ga.seed);

    try {
        app.parse(argc, argv);
        if (*train && !ta.config.empty()) {
            // defaults < config file < flags: reload the file over pristine
            // defaults, then reparse so the flags win again
            const std::string path = ta.config;
            ta = TrainArgs{};
            apply_config_file(ta, path);
            app.clear();
            app.parse(argc, argv);
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const phm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*verify) return cmd_verify(verify_trials);
        if (*analyze) return cmd_analyze(aa);
        if (*gradcheck) return cmd_gradcheck(ga);
    } catch (const phm::NumericsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const phm::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
