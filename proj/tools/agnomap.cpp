// agnomap command-line frontend.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "agnomap/datagen.hpp"
#include "agnomap/metrics.hpp"
#include "agnomap/micronet/checkpoint.hpp"
#include "agnomap/micronet/train.hpp"
#include "agnomap/pipeline.hpp"
#include "agnomap/pnm.hpp"
#include "agnomap/random.hpp"
#include "agnomap/run_config.hpp"
#include "agnomap/trojanscan.hpp"

namespace fs = std::filesystem;
using namespace agnomap;
using namespace agnomap::datagen;

namespace {

using Meta = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

Meta meta_for(const RunConfig& cfg, const std::string& command) {
    Meta m{{"command", command}};
    for (auto& kv : cfg.resolved()) m.push_back(std::move(kv));
    return m;
}

fs::path required_path(const RunConfig& cfg, const std::string& key, bool must_exist = true) {
    const std::string v = cfg.get(key);
    if (v.empty()) throw ConfigError(key + ": required");
    const fs::path p(v);
    if (must_exist && !fs::exists(p)) throw ConfigError(key + ": not found: " + v);
    return p;
}

/// A dataset directory holds labels.tsv directly, or train/ and test/ subdirectories.
Dataset load_split(const fs::path& dir, const std::string& split) {
    if (fs::exists(dir / "labels.tsv")) return import_dataset(dir);
    return import_dataset(dir / split);
}

bool has_split(const fs::path& dir, const std::string& split) { return fs::exists(dir / split / "labels.tsv"); }

/// Held-out split when present, else the training split.
Dataset validation_set(const fs::path& dir) { return has_split(dir, "test") ? import_dataset(dir / "test") : load_split(dir, "train"); }

std::string model_name(const RunConfig& cfg, const fs::path& model) {
    if (const std::string n = cfg.get("model_name"); !n.empty()) return n;
    const std::string stem = model.stem().string();
    if (stem == "model" && model.has_parent_path() && !model.parent_path().filename().empty())
        return model.parent_path().filename().string();
    return stem;
}

micronet::Classifier load_model(const RunConfig& cfg, const std::string& key, const Dataset* data = nullptr) {
    micronet::Classifier model = micronet::load(required_path(cfg, key));
    if (data && data->shape != model.input_shape())
        throw ConfigError(key + ": model input " + to_string(model.input_shape()) + " does not match data " +
                          to_string(data->shape));
    return model;
}

TriggerSpec trigger_from(const RunConfig& cfg) {
    return make_trigger(trigger_pattern_from_string(cfg.get("trigger")), cfg.image_shape(), int(cfg.get_int("target")),
                        cfg.get_real("poison_fraction"), int(cfg.get_int("trigger_size")));
}

int cmd_gen(const RunConfig& cfg) {
    const fs::path out = required_path(cfg, "out", false);
    const auto specs = default_concepts(int(cfg.get_int("classes")));
    const std::uint64_t seed = cfg.get_u64("seed");
    const Dataset train = generate(specs, int(cfg.get_int("n_per_class")), mix_seed(seed, 0), cfg.image_shape());
    export_dataset(train, out / "train");
    const int test_n = int(cfg.get_int("test_per_class"));
    if (test_n > 0) export_dataset(generate(specs, test_n, mix_seed(seed, 1), cfg.image_shape()), out / "test");
    pipeline::write_meta(out / "meta.txt", meta_for(cfg, "gen"));
    std::cout << "train " << train.size() << " test " << test_n * specs.size() << " -> " << out.string() << '\n';
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const fs::path data_dir = required_path(cfg, "data");
    const fs::path out = required_path(cfg, "out", false);
    const Dataset train = load_split(data_dir, "train");
    const bool with_test = has_split(data_dir, "test");
    const Dataset test = with_test ? import_dataset(data_dir / "test") : Dataset{};
    train.validate();
    const int classes = *std::max_element(train.labels.begin(), train.labels.end()) + 1;
    micronet::Classifier model(train.shape, micronet::default_architecture(std::max(classes, 2), int(cfg.get_int("width"))));
    model.init(mix_seed(cfg.get_u64("seed"), 1));
    const auto report = micronet::train(model, train, with_test ? &test : nullptr, cfg.train_config());
    fs::create_directories(out);
    micronet::save(model, out / "model.agnm");
    Meta meta = meta_for(cfg, "train");
    meta.emplace_back("final_score", fmt(report.train_accuracy));
    if (with_test) meta.emplace_back("test_accuracy", fmt(report.test_accuracy));
    pipeline::write_meta(out / "meta.txt", meta);
    std::cout << "train_accuracy " << report.train_accuracy;
    if (with_test) std::cout << " test_accuracy " << report.test_accuracy;
    std::cout << " -> " << (out / "model.agnm").string() << '\n';
    return 0;
}

int cmd_poison(const RunConfig& cfg) {
    const fs::path data_dir = required_path(cfg, "data");
    const fs::path out = required_path(cfg, "out", false);
    const Dataset train = load_split(data_dir, "train");
    if (train.shape != cfg.image_shape()) throw ConfigError("image_size: does not match the dataset");
    const TriggerSpec trig = trigger_from(cfg);
    export_dataset(poison(train, trig, cfg.get_u64("seed")), out / "train");
    if (has_split(data_dir, "test")) {
        const Dataset test = import_dataset(data_dir / "test");
        export_dataset(test, out / "test");
        Dataset triggered = test;
        for (std::size_t i = 0; i < test.size(); ++i)
            triggered.images.row(Eigen::Index(i)) = apply_trigger(test.images.row(Eigen::Index(i)).transpose(), trig);
        std::fill(triggered.labels.begin(), triggered.labels.end(), trig.target_label);
        export_dataset(triggered, out / "test_triggered");
    }
    pnm::write(out / "trigger_mask.pgm", trig.mask, {trig.shape.height, trig.shape.width, 1});
    pipeline::write_meta(out / "meta.txt", meta_for(cfg, "poison"));
    std::cout << "poisoned " << poison_indices(train.size(), trig.poison_fraction, cfg.get_u64("seed")).size()
              << " of " << train.size() << " -> " << out.string() << '\n';
    return 0;
}

int cmd_map(const RunConfig& cfg) {
    const fs::path data_dir = required_path(cfg, "data");
    const fs::path model_path = required_path(cfg, "model");
    const fs::path out = required_path(cfg, "out", false);
    const Dataset data = load_split(data_dir, "train");
    const Dataset val = validation_set(data_dir);
    const micronet::Classifier model = load_model(cfg, "model", &data);
    const auto pcfg = cfg.pipeline_config();
    const std::string name = model_name(cfg, model_path);
    const int label = int(cfg.get_int("concept"));
    const int runs = int(cfg.get_int("runs"));
    const std::uint64_t seed = cfg.get_u64("seed");
    for (int c = 0; c < model.num_classes(); ++c) {
        if (label >= 0 && c != label) continue;
        double score = 0.0;
        pipeline::RunFiles files;
        for (int r = 0; r < runs; ++r) {
            const std::uint64_t run_seed = seed + std::uint64_t(r);
            const SaliencyMap map = pipeline::visualize_concept(model, data, c, pcfg, run_seed);
            files = pipeline::run_paths(out, name, c, run_seed);
            pipeline::export_map(map, files.image);
            save_map(map, files.checkpoint);
            const double s = pipeline::nudge_success_rate(model, val, map);
            score += s;
            std::cout << "concept " << c << " seed " << run_seed << " final_score " << s << " -> "
                      << files.checkpoint.string() << '\n';
        }
        RunConfig resolved = cfg;
        resolved.set("concept", std::to_string(c));
        Meta meta = meta_for(resolved, "map");
        meta.emplace_back("final_score", fmt(score / runs));
        pipeline::write_meta(files.meta, meta);
    }
    return 0;
}

int cmd_score(const RunConfig& cfg) {
    const fs::path maps_dir = required_path(cfg, "maps");
    const fs::path out = required_path(cfg, "out", false);
    const bool cross = !cfg.get("target_model").empty();
    const std::string target_key = cross ? "target_model" : "model";
    const micronet::Classifier target = load_model(cfg, target_key);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(maps_dir))
        if (e.is_regular_file() && e.path().extension() == ".map") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError("score: no .map files under " + maps_dir.string());
    std::vector<SaliencyMap> maps;
    for (const auto& f : files) maps.push_back(load_map(f));
    auto report = metrics::m_score(target, maps, target.num_classes());
    report.source_id = cfg.get("model").empty() ? maps_dir.string() : cfg.get("model");
    report.target_id = cfg.get(target_key);
    metrics::write_report(report, out / "score.txt", out / "score.tsv");
    Meta meta = meta_for(cfg, "score");
    meta.emplace_back("m_score", fmt(report.m_score));
    meta.emplace_back("final_score", fmt(report.hit_rate()));
    pipeline::write_meta(out / "meta.txt", meta);
    std::cout << std::setprecision(17) << "m_score " << report.m_score << " maps " << maps.size() << " hit_rate "
              << report.hit_rate() << '\n';
    return 0;
}

int cmd_scan(const RunConfig& cfg) {
    const fs::path data_dir = required_path(cfg, "data");
    const fs::path out = required_path(cfg, "out", false);
    const Dataset data = load_split(data_dir, "train");
    const micronet::Classifier model = load_model(cfg, "model", &data);
    const auto scfg = cfg.scan_config();
    const int target = int(cfg.get_int("target"));
    const VectorXf mask = trigger_from(cfg).mask;
    std::optional<double> reference;
    if (!cfg.get("reference_model").empty()) {
        const micronet::Classifier clean = load_model(cfg, "reference_model", &data);
        reference = trojanscan::scan(clean, data, target, mask, scfg).median_ratio;
    }
    auto report = trojanscan::scan(model, data, target, mask, scfg, reference);
    for (int i = 0; i < int(report.maps.size()); ++i) {
        const std::string stem = std::to_string(trojanscan::run_seed(scfg, i));
        const fs::path img = out / "scan" / (stem + ".ppm");
        pipeline::export_map(report.maps[std::size_t(i)], img);
        save_map(report.maps[std::size_t(i)], out / "scan" / (stem + ".map"));
        report.map_paths.push_back(img);
    }
    trojanscan::write_scan_report(report, out / "scan_report.txt");
    Meta meta = meta_for(cfg, "scan");
    meta.emplace_back("final_score", fmt(report.median_ratio));
    meta.emplace_back("verdict", trojanscan::to_string(report.verdict));
    pipeline::write_meta(out / "meta.txt", meta);
    std::cout << std::setprecision(6) << "trigger_energy_ratio " << report.median_ratio << " threshold "
              << report.threshold << " verdict " << trojanscan::to_string(report.verdict) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Input-agnostic saliency maps for small image classifiers"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&);
    };
    const Command commands[] = {
        {"gen", "Generate the synthetic shape dataset", cmd_gen},
        {"train", "Train a classifier", cmd_train},
        {"poison", "Write a backdoor-poisoned copy of a dataset", cmd_poison},
        {"map", "Compute saliency maps for one or all concepts", cmd_map},
        {"score", "Model-score of a directory of maps", cmd_score},
        {"scan", "Scan a model for a backdoor footprint in its target class maps", cmd_scan},
    };

    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::vector<std::string> flag_values(RunConfig::schema().size());
    const Command* chosen = nullptr;
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", config_path, "key = value config file");
        const auto& keys = RunConfig::schema();
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i].output_only) continue;
            std::string names = "--" + keys[i].name;
            if (keys[i].name.find('_') != std::string::npos) {
                std::string dashed = keys[i].name;
                std::replace(dashed.begin(), dashed.end(), '_', '-');
                names += ",--" + dashed;
            }
            sub->add_option(names, flag_values[i], keys[i].help);
        }
        sub->callback([&chosen, &cmd] { chosen = &cmd; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        CLI::App* sub = app.get_subcommands().front();
        const auto& keys = RunConfig::schema();
        for (std::size_t i = 0; i < keys.size(); ++i)
            if (!keys[i].output_only && sub->count("--" + keys[i].name) > 0) cfg.set(keys[i].name, flag_values[i]);
        cfg.validate();
        return chosen->run(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
