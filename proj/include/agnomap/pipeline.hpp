#ifndef AGNOMAP_PIPELINE_HPP
#define AGNOMAP_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "agnomap/mapper.hpp"
#include "agnomap/refiner.hpp"

namespace agnomap::pipeline {

using micronet::Classifier;

struct PipelineConfig {
    mapper::MapperConfig mapper;
    refiner::RefineConfig refine;
    int cycles = 2;

    /// Full-resolution hyper-parameters (224x224x3 inputs): b=128, K=650, eta=30,
    /// 150 refinement steps, lambda=50, two cycles.
    static PipelineConfig paper();
    /// Same recipe scaled to 32x32x3: b=32, K=150, 60 refinement steps, eta=4.5.
    static PipelineConfig desk();

    void validate() const;
};

struct CycleStats {
    double seed_norm = 0.0;           // ||nu|| entering the mapper
    double mapper_norm = 0.0;         // after the mapper
    double refined_norm = 0.0;        // after refinement
    double low_xi_before = 0.0;       // mean |nu| where Xi < 0.1, entering refinement
    double low_xi_after = 0.0;        // same mask, leaving refinement
};

struct PipelineTrace {
    std::vector<CycleStats> cycles;
};

/// Starts from the zero map; each cycle runs the mapper then refinement, and
/// the refined map seeds the next cycle. Sub-seeds derive from run_seed only.
SaliencyMap visualize_concept(const Classifier& model, const Dataset& data, int label, const PipelineConfig& cfg,
                              std::uint64_t run_seed, PipelineTrace* trace = nullptr);

/// Fraction of samples whose nudged version clip(I - nu) is predicted as the map's label.
double nudge_success_rate(const Classifier& model, const Dataset& data, const SaliencyMap& map);

/// Writes the display-normalized map as a P6 image. With a reference image the
/// output is [map | reference] side by side.
void export_map(const SaliencyMap& map, const std::filesystem::path& path, const VectorXf* reference = nullptr);

/// key = value lines.
void write_meta(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& entries);

struct RunFiles {
    std::filesystem::path image;
    std::filesystem::path checkpoint;
    std::filesystem::path meta;
};

/// Layout: <root>/maps/<model>/<label>/<run_seed>.ppm, <run_seed>.map and meta.txt.
RunFiles run_paths(const std::filesystem::path& root, const std::string& model_name, int label,
                   std::uint64_t run_seed);

}  // namespace agnomap::pipeline

#endif  // AGNOMAP_PIPELINE_HPP
