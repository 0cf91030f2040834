#include "agnomap/trojanscan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "agnomap/random.hpp"

namespace agnomap::trojanscan {

using namespace datagen;

double attack_success_rate(const Classifier& model, const Dataset& clean, const TriggerSpec& trigger) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < clean.size(); ++i)
        if (clean.labels[i] != trigger.target_label) idx.push_back(i);
    if (idx.empty()) return 0.0;
    Batch triggered(Eigen::Index(idx.size()), clean.images.cols());
    for (std::size_t j = 0; j < idx.size(); ++j)
        triggered.row(Eigen::Index(j)) = apply_trigger(clean.images.row(Eigen::Index(idx[j])).transpose(), trigger);
    return model.prediction_rate(triggered, trigger.target_label);
}

CompromisedModel train_compromised(const Dataset& clean_train, const Dataset& clean_test, const TriggerSpec& trigger,
                                   const CompromiseConfig& cfg) {
    trigger.validate();
    if (trigger.shape != clean_train.shape) throw ConfigError("train_compromised: trigger shape does not match data");
    if (cfg.max_attempts < 1) throw ConfigError("train_compromised: max_attempts must be >= 1");
    const int classes = clean_train.labels.empty() ? 0 : *std::max_element(clean_train.labels.begin(), clean_train.labels.end()) + 1;
    if (trigger.target_label < 0 || trigger.target_label >= std::max(classes, 2))
        throw ConfigError("train_compromised: trigger target label out of range");

    const Dataset poisoned = poison(clean_train, trigger, cfg.poison_seed);
    const auto arch = micronet::default_architecture(std::max(classes, 2), cfg.width);
    micronet::TrainConfig tc = cfg.train;
    CompromisedModel out{Classifier(clean_train.shape, arch)};
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        Classifier model(clean_train.shape, arch);
        model.init(cfg.init_seed);
        micronet::train(model, poisoned, nullptr, tc);
        out = {std::move(model), 0.0, 0.0, tc.epochs, attempt};
        out.clean_accuracy = micronet::accuracy(out.model, clean_test);
        out.attack_success = attack_success_rate(out.model, clean_test, trigger);
        if (out.clean_accuracy >= cfg.min_clean_accuracy && out.attack_success >= cfg.min_attack_success) return out;
        tc.epochs += cfg.extra_epochs;
    }
    std::ostringstream msg;
    msg << "train_compromised: thresholds not reached after " << cfg.max_attempts
        << " attempts (clean accuracy " << out.clean_accuracy << ", attack success " << out.attack_success << ")";
    throw TrainingError(msg.str());
}

double trigger_energy(const SaliencyMap& map, const VectorXf& mask) {
    const ImageShape& s = map.shape;
    if (mask.size() != s.pixels()) throw InputError("trigger_energy: mask size does not match map");
    double in = 0.0, out = 0.0;
    Eigen::Index n_in = 0, n_out = 0;
    for (Eigen::Index p = 0; p < s.pixels(); ++p) {
        const double a = map.nu.segment(p * s.channels, s.channels).cast<double>().cwiseAbs().sum();
        if (mask[p] > 0.5f) {
            in += a;
            n_in += s.channels;
        } else {
            out += a;
            n_out += s.channels;
        }
    }
    if (n_in == 0) throw InputError("trigger_energy: empty mask");
    const double mean_in = in / double(n_in);
    const double mean_out = n_out ? out / double(n_out) : 0.0;
    return mean_in / std::max(mean_out, 1e-9);
}

Region localize(const SaliencyMap& map, double quantile) {
    const ImageShape& s = map.shape;
    const Eigen::Index n = s.pixels();
    std::vector<double> mag(std::size_t(n), 0.0);
    for (Eigen::Index p = 0; p < n; ++p)
        mag[std::size_t(p)] = map.nu.segment(p * s.channels, s.channels).cwiseAbs().maxCoeff();
    std::vector<double> sorted = mag;
    std::sort(sorted.begin(), sorted.end());
    const auto q = std::size_t(std::clamp(quantile, 0.0, 1.0) * double(n - 1));
    const double cut = sorted[q];

    Region best;
    best.mask = VectorXf::Zero(n);
    std::vector<int> comp(std::size_t(n), -1);
    std::vector<Eigen::Index> stack, members;
    for (Eigen::Index start = 0; start < n; ++start) {
        if (mag[std::size_t(start)] < cut || comp[std::size_t(start)] >= 0 || mag[std::size_t(start)] == 0.0) continue;
        members.clear();
        stack.assign(1, start);
        comp[std::size_t(start)] = int(start);
        while (!stack.empty()) {
            const Eigen::Index p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int y = int(p / s.width), x = int(p % s.width);
            const int ny[] = {y - 1, y + 1, y, y}, nx[] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= s.height || nx[k] < 0 || nx[k] >= s.width) continue;
                const Eigen::Index r = Eigen::Index(ny[k]) * s.width + nx[k];
                if (comp[std::size_t(r)] >= 0 || mag[std::size_t(r)] < cut || mag[std::size_t(r)] == 0.0) continue;
                comp[std::size_t(r)] = int(start);
                stack.push_back(r);
            }
        }
        if (int(members.size()) > best.pixels) {
            best.pixels = int(members.size());
            best.mask.setZero();
            best.top = s.height;
            best.left = s.width;
            best.bottom = best.right = 0;
            for (Eigen::Index p : members) {
                best.mask[p] = 1.f;
                const int y = int(p / s.width), x = int(p % s.width);
                best.top = std::min(best.top, y);
                best.bottom = std::max(best.bottom, y);
                best.left = std::min(best.left, x);
                best.right = std::max(best.right, x);
            }
        }
    }
    if (best.pixels == 0) best.top = best.left = 0;
    return best;
}

const char* to_string(Verdict v) {
    return v == Verdict::BackdoorSuspect ? "backdoor-suspect" : "clean-consistent";
}

void ScanConfig::validate() const {
    pipeline.validate();
    if (runs < 1) throw ConfigError("scan: runs must be >= 1");
    if (!(threshold_factor > 0.0)) throw ConfigError("scan: threshold factor must be positive");
}

std::uint64_t run_seed(const ScanConfig& cfg, int run) { return mix_seed(cfg.seed, std::uint64_t(run)); }

double median(std::vector<double> values) {
    if (values.empty()) throw InputError("median: no values");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

ScanReport scan(const Classifier& model, const Dataset& data, int target_class, const VectorXf& mask,
                const ScanConfig& cfg, std::optional<double> reference_ratio) {
    cfg.validate();
    ScanReport r;
    r.target_class = target_class;
    r.reference_ratio = reference_ratio.value_or(1.0);
    r.threshold = cfg.threshold_factor * r.reference_ratio;
    for (int i = 0; i < cfg.runs; ++i) {
        SaliencyMap map = pipeline::visualize_concept(model, data, target_class, cfg.pipeline, run_seed(cfg, i));
        r.ratios.push_back(trigger_energy(map, mask));
        r.maps.push_back(std::move(map));
    }
    r.median_ratio = median(r.ratios);
    r.verdict = r.median_ratio >= r.threshold ? Verdict::BackdoorSuspect : Verdict::CleanConsistent;
    r.blind_region = localize(r.maps.front());
    if (r.blind_region.pixels > 0) r.blind_ratio = trigger_energy(r.maps.front(), r.blind_region.mask);
    return r;
}

void write_scan_report(const ScanReport& r, const std::filesystem::path& path) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_scan_report: cannot open " + path.string());
    out << std::setprecision(17);
    out << "target_class = " << r.target_class << '\n';
    out << "trigger_energy_ratio = " << r.median_ratio << '\n';
    out << "ratios =";
    for (double v : r.ratios) out << ' ' << v;
    out << '\n';
    out << "reference_ratio = " << r.reference_ratio << '\n';
    out << "threshold = " << r.threshold << '\n';
    out << "verdict = " << to_string(r.verdict) << '\n';
    out << "blind_region = " << r.blind_region.top << ' ' << r.blind_region.left << ' ' << r.blind_region.bottom << ' '
        << r.blind_region.right << '\n';
    out << "blind_region_pixels = " << r.blind_region.pixels << '\n';
    out << "blind_ratio = " << r.blind_ratio << '\n';
    for (const auto& p : r.map_paths) out << "map = " << p.string() << '\n';
    if (!out) throw std::runtime_error("write_scan_report: write failed for " + path.string());
}

}  // namespace agnomap::trojanscan
