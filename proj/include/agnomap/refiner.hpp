#ifndef AGNOMAP_REFINER_HPP
#define AGNOMAP_REFINER_HPP

// Map refinement: Adam on
//
//   E_I[ J_CE(clip(I - nu), label) ] + lambda * mean(| nu * (1 - Xi) |)
//
// where Xi is the map's own last-conv activation, channel-averaged, upsampled
// to the input size and normalized to [0, 1]. Xi is a weighting, not a
// variable: it is held constant inside each gradient step. The result is
// clipped to [-1, 1] and projected back onto the l2 ball.

#include <cstdint>
#include <vector>

#include "agnomap/dataset.hpp"
#include "agnomap/micronet/network.hpp"
#include "agnomap/saliency_map.hpp"

namespace agnomap::refiner {

using micronet::Classifier;

struct XiMatrix {
    ImageShape shape;
    VectorXf xi;  // (h, w, c), every entry in [0, 1]
    int source_layer = -1;
};

struct RefineConfig {
    float lambda = 50.f;
    int iterations = 150;
    float lr = 0.01f;
    float eta = 30.f;
    int batch_size = 128;
    bool recompute_xi = true;  // false freezes Xi at its value for the incoming map
    std::uint64_t seed = 0;

    void validate() const;
};

/// Bilinear resize of a single-channel plane, half-pixel centers, edge clamped.
VectorXf bilinear_resize(const VectorXf& plane, int height, int width, int out_height, int out_width);

XiMatrix compute_xi(const Classifier& model, const VectorXf& nu);

/// Objective value on a batch for a given Xi.
double objective(const Classifier& model, const Batch& batch, const VectorXf& nu, const XiMatrix& xi, int label,
                 float lambda);

/// Gradient of objective() w.r.t. nu, Xi held fixed. The model term includes the
/// clip mask (zero where I - nu leaves [0, 1]).
VectorXf objective_grad(const Classifier& model, const Batch& batch, const VectorXf& nu, const XiMatrix& xi,
                        int label, float lambda);

struct RefineTrace {
    XiMatrix initial_xi;
    std::vector<double> weighted_l1;  // ||nu * (1 - Xi)||_1 after each step, current Xi
};

SaliencyMap refine(const Classifier& model, const Dataset& data, const SaliencyMap& map, const RefineConfig& cfg,
                   RefineTrace* trace = nullptr);

/// Mean |nu| over entries where xi < threshold; 0 when there are none.
double masked_mean_abs(const VectorXf& nu, const XiMatrix& xi, float threshold = 0.1f);

}  // namespace agnomap::refiner

#endif  // AGNOMAP_REFINER_HPP
