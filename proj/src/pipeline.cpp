#include "agnomap/pipeline.hpp"

#include <fstream>

#include "agnomap/pnm.hpp"
#include "agnomap/random.hpp"

namespace agnomap::pipeline {

PipelineConfig PipelineConfig::paper() {
    PipelineConfig c;
    c.mapper.batch_size = 128;
    c.mapper.iterations = 650;
    c.mapper.eta = 30.f;
    c.refine.iterations = 150;
    c.refine.lambda = 50.f;
    c.refine.batch_size = 128;
    c.refine.eta = 30.f;
    c.cycles = 2;
    return c;
}

PipelineConfig PipelineConfig::desk() {
    PipelineConfig c = paper();
    c.mapper.batch_size = 32;
    c.mapper.iterations = 150;
    c.mapper.eta = 4.5f;
    c.refine.iterations = 60;
    c.refine.batch_size = 32;
    c.refine.eta = 4.5f;
    return c;
}

void PipelineConfig::validate() const {
    mapper.validate();
    refine.validate();
    if (cycles < 1) throw ConfigError("pipeline: cycles must be >= 1");
    if (mapper.eta != refine.eta) throw ConfigError("pipeline: mapper and refinement must share eta");
}

SaliencyMap visualize_concept(const Classifier& model, const Dataset& data, int label, const PipelineConfig& cfg,
                              std::uint64_t run_seed, PipelineTrace* trace) {
    cfg.validate();
    if (label < 0 || label >= model.num_classes()) throw InputError("visualize_concept: concept out of range");
    SaliencyMap map = SaliencyMap::zeros(model.input_shape(), label, cfg.mapper.eta);
    for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
        CycleStats stats;
        stats.seed_norm = map.norm();

        mapper::MapperConfig mc = cfg.mapper;
        mc.seed = mix_seed(run_seed, 2 * std::uint64_t(cycle));
        map = mapper::run_mapper(model, data, label, mc, map);
        stats.mapper_norm = map.norm();

        refiner::RefineConfig rc = cfg.refine;
        rc.seed = mix_seed(run_seed, 2 * std::uint64_t(cycle) + 1);
        refiner::RefineTrace rt;
        const VectorXf before = map.nu;
        map = refiner::refine(model, data, map, rc, &rt);
        stats.refined_norm = map.norm();
        stats.low_xi_before = refiner::masked_mean_abs(before, rt.initial_xi);
        stats.low_xi_after = refiner::masked_mean_abs(map.nu, rt.initial_xi);
        if (trace) trace->cycles.push_back(stats);
    }
    return map;
}

double nudge_success_rate(const Classifier& model, const Dataset& data, const SaliencyMap& map) {
    if (data.empty()) return 0.0;
    return model.prediction_rate(mapper::nudge_batch(data.images, map.nu), map.label);
}

void export_map(const SaliencyMap& map, const std::filesystem::path& path, const VectorXf* reference) {
    if (map.shape.channels != 3 && map.shape.channels != 1) throw InputError("export_map: need 1 or 3 channels");
    VectorXf img = display_normalize(map.nu);
    ImageShape shape = map.shape;
    if (map.shape.channels == 1) {  // P6 output always
        VectorXf rgb(shape.pixels() * 3);
        for (Eigen::Index p = 0; p < shape.pixels(); ++p) rgb.segment(p * 3, 3).setConstant(img[p]);
        img = std::move(rgb);
        shape.channels = 3;
    }
    if (reference) {
        if (reference->size() != map.shape.size()) throw InputError("export_map: reference image shape mismatch");
        const int c = map.shape.channels;
        ImageShape wide{shape.height, 2 * shape.width, 3};
        VectorXf both(wide.size());
        for (int y = 0; y < shape.height; ++y)
            for (int x = 0; x < shape.width; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    both[(Eigen::Index(y) * wide.width + x) * 3 + ch] = img[(Eigen::Index(y) * shape.width + x) * 3 + ch];
                    both[(Eigen::Index(y) * wide.width + shape.width + x) * 3 + ch] =
                        (*reference)[(Eigen::Index(y) * shape.width + x) * c + (c == 3 ? ch : 0)];
                }
        img = std::move(both);
        shape = wide;
    }
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    pnm::write(path, img, shape);
}

void write_meta(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& entries) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_meta: cannot open " + path.string());
    for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
    if (!out) throw std::runtime_error("write_meta: write failed for " + path.string());
}

RunFiles run_paths(const std::filesystem::path& root, const std::string& model_name, int label,
                   std::uint64_t run_seed) {
    const std::filesystem::path dir = root / "maps" / model_name / std::to_string(label);
    const std::string stem = std::to_string(run_seed);
    return {dir / (stem + ".ppm"), dir / (stem + ".map"), dir / "meta.txt"};
}

}  // namespace agnomap::pipeline
