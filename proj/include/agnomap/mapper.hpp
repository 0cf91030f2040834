#ifndef AGNOMAP_MAPPER_HPP
#define AGNOMAP_MAPPER_HPP

// Input-agnostic saliency mapper. Each iteration nudges a mini-batch by the
// current map, averages the label's input gradients, turns the average into
// a moment-normalized direction, picks the sign whose unit probe better
// favours the label, accumulates, and projects back onto the l2 ball.

#include <cstdint>
#include <vector>

#include "agnomap/dataset.hpp"
#include "agnomap/micronet/network.hpp"
#include "agnomap/saliency_map.hpp"

namespace agnomap::mapper {

using micronet::Classifier;

/// How a probe batch is scored for the label.
enum class ProbeScore { Probability, PredictionRate };

struct MapperConfig {
    int batch_size = 128;
    int iterations = 650;
    float eta = 30.f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-12f;  // denominator guard for the direction
    ProbeScore probe = ProbeScore::Probability;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless b >= 1, K >= 0, eta > 0, 0 < beta1 < beta2 < 1.
    void validate() const;
};

struct MapperState {
    VectorXf mu;
    VectorXf sigma;
    int k = 0;

    explicit MapperState(Eigen::Index n) : mu(VectorXf::Zero(n)), sigma(VectorXf::Zero(n)) {}
};

/// Each row becomes clip(row - nu, 0, 1).
Batch nudge_batch(const Batch& batch, const VectorXf& nu);

/// Mean over the batch of the per-sample input gradients of J_CE(., label).
VectorXf expected_grad(const Classifier& model, const Batch& nudged, int label);

/// Advances k and the moment recurrences with x, then returns
/// v = (mu sqrt(1 - b2^k)) / (sqrt(sigma) (1 - b1^k) + epsilon).
VectorXf moment_direction(MapperState& state, const VectorXf& x, const MapperConfig& cfg);

struct BranchDecision {
    bool plus = true;  // update is +v
    double score_plus = 0.0;
    double score_minus = 0.0;
    VectorXf update;   // +v or -v, unnormalized
};

/// Probes clip(I - (nu_prev +/- v/||v||)) and keeps +v when its score is at
/// least the score of -v. A zero v returns +v without probing.
BranchDecision branch_select(const Classifier& model, const Batch& batch, const VectorXf& nu_prev,
                             const VectorXf& v, int label, ProbeScore probe);

/// Mean softmax probability (or prediction rate) of the label over the batch.
double probe_score(const Classifier& model, const Batch& batch, int label, ProbeScore probe);

/// Optional per-iteration record, for diagnostics and tests.
struct MapperTrace {
    std::vector<double> norms;  // ||nu_k|| after projection
    std::vector<BranchDecision> decisions;  // update vectors are dropped unless keep_decisions
    bool keep_decisions = false;
    bool sampled_with_replacement = false;
};

/// Runs cfg.iterations iterations from seed_map and returns nu_K.
SaliencyMap run_mapper(const Classifier& model, const Dataset& data, int label, const MapperConfig& cfg,
                       const SaliencyMap& seed_map, MapperTrace* trace = nullptr);

}  // namespace agnomap::mapper

#endif  // AGNOMAP_MAPPER_HPP
