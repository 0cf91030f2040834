#ifndef AGNOMAP_SALIENCY_MAP_HPP
#define AGNOMAP_SALIENCY_MAP_HPP

#include <filesystem>

#include "agnomap/core.hpp"

namespace agnomap {

/// Input-agnostic visualization of one label: an image-shaped perturbation
/// whose subtraction from inputs drives them toward `label`.
struct SaliencyMap {
    ImageShape shape;
    VectorXf nu;
    int label = 0;
    float eta = 0.f;     // ball radius the map is kept within
    int iterations = 0;  // mapper iterations accumulated so far

    static SaliencyMap zeros(ImageShape shape, int label, float eta) {
        return {shape, VectorXf::Zero(shape.size()), label, eta, 0};
    }
    [[nodiscard]] double norm() const { return nu.cast<double>().norm(); }
};

/// Rescales onto the l2 ball of radius eta: nu * min(1, eta / ||nu||).
/// A zero vector is returned unchanged.
VectorXf project(const VectorXf& nu, float eta);

/// Per-map min-max normalization to [0, 1]; a constant map becomes 0.5.
VectorXf display_normalize(const VectorXf& nu);

/// Map checkpoint in the shared AGNM1 container: a MapMeta record
/// (ints: label, iterations; floats: eta) and a Tensor record (ints: h, w, c).
void save_map(const SaliencyMap& map, const std::filesystem::path& path);
SaliencyMap load_map(const std::filesystem::path& path);

}  // namespace agnomap

#endif  // AGNOMAP_SALIENCY_MAP_HPP
