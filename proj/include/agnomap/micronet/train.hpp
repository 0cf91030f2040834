#ifndef AGNOMAP_MICRONET_TRAIN_HPP
#define AGNOMAP_MICRONET_TRAIN_HPP

#include <cstdint>

#include "agnomap/dataset.hpp"
#include "agnomap/micronet/network.hpp"

namespace agnomap::micronet {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    float lr = 2e-3f;
    std::uint64_t seed = 1;
};

struct TrainReport {
    int epochs_run = 0;
    double final_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;  // NaN when no test set is given
};

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const Classifier& model, const Dataset& data);

/// Mini-batch Adam on mean cross-entropy. Shuffles once per epoch from the
/// seeded stream, so identical inputs give bit-identical weights.
/// Throws TrainingError if the loss becomes non-finite.
TrainReport train(Classifier& model, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg);

}  // namespace agnomap::micronet

#endif  // AGNOMAP_MICRONET_TRAIN_HPP
