#ifndef AGNOMAP_TROJANSCAN_HPP
#define AGNOMAP_TROJANSCAN_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "agnomap/datagen.hpp"
#include "agnomap/micronet/train.hpp"
#include "agnomap/pipeline.hpp"

namespace agnomap::trojanscan {

using datagen::TriggerSpec;

using micronet::Classifier;

struct CompromiseConfig {
    micronet::TrainConfig train;
    int width = 8;                  // default_architecture width
    std::uint64_t init_seed = 1;
    std::uint64_t poison_seed = 1;
    double min_clean_accuracy = 0.9;
    double min_attack_success = 0.95;
    int max_attempts = 3;           // each retry trains from scratch with extra_epochs more
    int extra_epochs = 5;
};

struct CompromisedModel {
    Classifier model;
    double clean_accuracy = 0.0;
    double attack_success = 0.0;
    int epochs = 0;
    int attempts = 0;
};

/// Fraction of images with label != target that are predicted as the target once triggered.
double attack_success_rate(const Classifier& model, const Dataset& clean, const TriggerSpec& trigger);

/// Poisons the training set and trains until both thresholds hold; throws
/// TrainingError with the measured rates when the attempts run out.
CompromisedModel train_compromised(const Dataset& clean_train, const Dataset& clean_test, const TriggerSpec& trigger,
                                   const CompromiseConfig& cfg);

/// mean |nu| inside the (h*w) mask over mean |nu| outside it, the latter floored at 1e-9.
double trigger_energy(const SaliencyMap& map, const VectorXf& mask);

struct Region {
    VectorXf mask;  // h*w, binary
    int pixels = 0;
    int top = 0, left = 0, bottom = 0, right = 0;  // inclusive bounding box
};

/// Thresholds per-pixel |nu| (max over channels) at the given quantile and
/// keeps the largest 4-connected component. Zero pixels never belong to it.
Region localize(const SaliencyMap& map, double quantile = 0.9);

enum class Verdict { CleanConsistent, BackdoorSuspect };
const char* to_string(Verdict v);

struct ScanConfig {
    pipeline::PipelineConfig pipeline = pipeline::PipelineConfig::desk();
    int runs = 3;
    double threshold_factor = 2.0;
    std::uint64_t seed = 0;
    void validate() const;
};

struct ScanReport {
    int target_class = 0;
    std::vector<double> ratios;  // one per run
    double median_ratio = 0.0;
    double reference_ratio = 1.0;
    double threshold = 2.0;
    Verdict verdict = Verdict::CleanConsistent;
    std::vector<SaliencyMap> maps;
    std::vector<std::filesystem::path> map_paths;
    Region blind_region;          // from the first run's map
    double blind_ratio = 0.0;     // trigger_energy of that region
};

/// Seeds of run i: mix_seed(cfg.seed, i).
std::uint64_t run_seed(const ScanConfig& cfg, int run);

/// Median trigger energy over cfg.runs maps of target_class. reference_ratio is
/// the same statistic on a clean model; without one, 1 (no footprint) is assumed.
ScanReport scan(const Classifier& model, const Dataset& data, int target_class, const VectorXf& mask,
                const ScanConfig& cfg, std::optional<double> reference_ratio = std::nullopt);

double median(std::vector<double> values);

void write_scan_report(const ScanReport& report, const std::filesystem::path& path);

}  // namespace agnomap::trojanscan

#endif  // AGNOMAP_TROJANSCAN_HPP
