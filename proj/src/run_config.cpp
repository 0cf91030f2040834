#include "agnomap/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace agnomap {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

bool parse_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

bool parse_flag(const std::string& s, bool& out) {
    if (s == "true" || s == "1" || s == "yes") return out = true, true;
    if (s == "false" || s == "0" || s == "no") return out = false, true;
    return false;
}

}  // namespace

const std::vector<KeySpec>& RunConfig::schema() {
    static const std::vector<KeySpec> keys = {
        {"profile", KeyType::Text, "desk", "paper", "desk or paper: selects the defaults below"},
        {"seed", KeyType::UInt, "0", "0", "run seed"},
        // data
        {"classes", KeyType::Int, "4", "4", "number of concepts (2..6)"},
        {"n_per_class", KeyType::Int, "1000", "1000", "training images per class"},
        {"test_per_class", KeyType::Int, "100", "100", "held-out images per class"},
        {"image_size", KeyType::Int, "32", "32", "image height and width"},
        {"data", KeyType::Path, "", "", "dataset directory"},
        // classifier
        {"width", KeyType::Int, "8", "8", "channels of the first conv layer"},
        {"epochs", KeyType::Int, "10", "10", "training epochs"},
        {"train_batch", KeyType::Int, "32", "32", "training batch size"},
        {"train_lr", KeyType::Real, "0.002", "0.002", "training learning rate"},
        {"model", KeyType::Path, "", "", "classifier checkpoint"},
        {"model_name", KeyType::Text, "", "", "name used in maps/<model>/; defaults from the checkpoint path"},
        // mapper
        {"concept", KeyType::Int, "-1", "-1", "concept to visualize, -1 for all"},
        {"runs", KeyType::Int, "1", "1", "maps per concept; run i uses seed + i"},
        {"batch_size", KeyType::Int, "32", "128", "mapper batch size b"},
        {"iterations", KeyType::Int, "150", "650", "mapper iterations K"},
        {"eta", KeyType::Real, "4.5", "30", "l2 radius of the map"},
        {"beta1", KeyType::Real, "0.9", "0.9", "first moment decay"},
        {"beta2", KeyType::Real, "0.999", "0.999", "second moment decay"},
        {"probe", KeyType::Text, "probability", "probability", "branch probe: probability or rate"},
        // refinement
        {"lambda", KeyType::Real, "50", "50", "weight of the activation-masked l1 penalty"},
        {"refine_iterations", KeyType::Int, "60", "150", "refinement steps per cycle"},
        {"refine_lr", KeyType::Real, "0.01", "0.01", "refinement Adam step size"},
        {"recompute_xi", KeyType::Flag, "true", "true", "recompute the activation mask every step"},
        {"cycles", KeyType::Int, "2", "2", "mapper/refinement cycles"},
        // scoring
        {"maps", KeyType::Path, "", "", "directory of .map files to score"},
        {"target_model", KeyType::Path, "", "", "model scoring the maps; defaults to model"},
        // backdoor
        {"trigger", KeyType::Text, "square", "square", "square, checkerboard or cross"},
        {"target", KeyType::Int, "0", "0", "backdoor target label"},
        {"poison_fraction", KeyType::Real, "0.1", "0.1", "fraction of training images poisoned"},
        {"trigger_size", KeyType::Int, "8", "8", "trigger side length"},
        {"scan_runs", KeyType::Int, "3", "3", "maps per scan"},
        {"threshold_factor", KeyType::Real, "2", "2", "verdict threshold over the reference ratio"},
        {"reference_model", KeyType::Path, "", "", "clean model giving the reference ratio"},
        {"out", KeyType::Path, "out", "out", "output directory"},
        // results
        {"command", KeyType::Text, "", "", "command that wrote this file", true},
        {"final_score", KeyType::Text, "", "", "result of the run", true},
        {"clean_accuracy", KeyType::Text, "", "", "result of the run", true},
        {"attack_success", KeyType::Text, "", "", "result of the run", true},
        {"test_accuracy", KeyType::Text, "", "", "result of the run", true},
        {"m_score", KeyType::Text, "", "", "result of the run", true},
        {"verdict", KeyType::Text, "", "", "result of the run", true},
    };
    return keys;
}

const KeySpec* RunConfig::find(std::string_view key) {
    for (const auto& k : schema())
        if (k.name == key) return &k;
    return nullptr;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const KeySpec* spec = find(key);
    if (!spec) throw ConfigError(key + ": unknown key");
    if (spec->output_only) return;
    const std::string value = trim(raw);
    bool ok = true;
    switch (spec->type) {
        case KeyType::Int: {
            long long v;
            ok = parse_number(value, v);
            break;
        }
        case KeyType::UInt: {
            std::uint64_t v;
            ok = parse_number(value, v);
            break;
        }
        case KeyType::Real: {
            double v;
            ok = parse_real(value, v);
            break;
        }
        case KeyType::Flag: {
            bool v;
            ok = parse_flag(value, v);
            break;
        }
        case KeyType::Text:
        case KeyType::Path: break;
    }
    if (!ok) throw ConfigError(key + ": cannot parse '" + value + "'");
    if (key == "profile" && value != "desk" && value != "paper") throw ConfigError("profile: expected desk or paper");
    values_[key] = value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        set(trim(t.substr(0, eq)), t.substr(eq + 1));
    }
}

std::string RunConfig::get(const std::string& key) const {
    const KeySpec* spec = find(key);
    if (!spec) throw ConfigError(key + ": unknown key");
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (key == "profile") return spec->desk;
    return get("profile") == "paper" ? spec->paper : spec->desk;
}

long long RunConfig::get_int(const std::string& key) const {
    long long v = 0;
    if (!parse_number(get(key), v)) throw ConfigError(key + ": not an integer");
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    std::uint64_t v = 0;
    if (!parse_number(get(key), v)) throw ConfigError(key + ": not an unsigned integer");
    return v;
}

double RunConfig::get_real(const std::string& key) const {
    double v = 0;
    if (!parse_real(get(key), v)) throw ConfigError(key + ": not a number");
    return v;
}

bool RunConfig::get_flag(const std::string& key) const {
    bool v = false;
    if (!parse_flag(get(key), v)) throw ConfigError(key + ": not a flag");
    return v;
}

void RunConfig::validate() const {
    auto at_least = [&](const char* key, long long lo) {
        if (get_int(key) < lo) throw ConfigError(std::string(key) + ": must be >= " + std::to_string(lo));
    };
    const long long classes = get_int("classes");
    if (classes < 2 || classes > 6) throw ConfigError("classes: must be in 2..6");
    at_least("n_per_class", 1);
    at_least("test_per_class", 0);
    at_least("image_size", 8);
    at_least("width", 1);
    at_least("epochs", 0);
    at_least("train_batch", 1);
    at_least("runs", 1);
    at_least("scan_runs", 1);
    at_least("trigger_size", 1);
    if (!(get_real("train_lr") > 0)) throw ConfigError("train_lr: must be positive");
    const long long label = get_int("concept");
    if (label < -1 || label >= classes) throw ConfigError("concept: must be -1 or in [0, classes)");
    const long long target = get_int("target");
    if (target < 0 || target >= classes) throw ConfigError("target: must be in [0, classes)");
    const double pf = get_real("poison_fraction");
    if (!(pf > 0 && pf <= 1)) throw ConfigError("poison_fraction: must be in (0, 1]");
    const std::string probe = get("probe");
    if (probe != "probability" && probe != "rate") throw ConfigError("probe: expected probability or rate");
    try {
        (void)datagen::trigger_pattern_from_string(get("trigger"));
    } catch (const std::exception&) {
        throw ConfigError("trigger: expected square, checkerboard or cross");
    }
    const double trigger_fraction = double(get_int("trigger_size") * get_int("trigger_size")) /
                                    double(get_int("image_size") * get_int("image_size"));
    if (get_int("trigger_size") > get_int("image_size") || trigger_fraction > 0.15)
        throw ConfigError("trigger_size: trigger must cover at most 15% of the image");
    scan_config().validate();  // covers mapper, refinement and pipeline keys
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : schema())
        if (!k.output_only) out.emplace_back(k.name, get(k.name));
    return out;
}

ImageShape RunConfig::image_shape() const {
    const int s = int(get_int("image_size"));
    return {s, s, 3};
}

micronet::TrainConfig RunConfig::train_config() const {
    micronet::TrainConfig c;
    c.epochs = int(get_int("epochs"));
    c.batch_size = int(get_int("train_batch"));
    c.lr = float(get_real("train_lr"));
    c.seed = get_u64("seed");
    return c;
}

pipeline::PipelineConfig RunConfig::pipeline_config() const {
    pipeline::PipelineConfig c;
    c.mapper.batch_size = int(get_int("batch_size"));
    c.mapper.iterations = int(get_int("iterations"));
    c.mapper.eta = float(get_real("eta"));
    c.mapper.beta1 = float(get_real("beta1"));
    c.mapper.beta2 = float(get_real("beta2"));
    c.mapper.probe = get("probe") == "rate" ? mapper::ProbeScore::PredictionRate : mapper::ProbeScore::Probability;
    c.refine.lambda = float(get_real("lambda"));
    c.refine.iterations = int(get_int("refine_iterations"));
    c.refine.lr = float(get_real("refine_lr"));
    c.refine.eta = c.mapper.eta;
    c.refine.batch_size = c.mapper.batch_size;
    c.refine.recompute_xi = get_flag("recompute_xi");
    c.cycles = int(get_int("cycles"));
    return c;
}

trojanscan::ScanConfig RunConfig::scan_config() const {
    trojanscan::ScanConfig c;
    c.pipeline = pipeline_config();
    c.runs = int(get_int("scan_runs"));
    c.threshold_factor = get_real("threshold_factor");
    c.seed = get_u64("seed");
    return c;
}

}  // namespace agnomap
