#include "agnomap/micronet/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "agnomap/micronet/adam.hpp"
#include "agnomap/random.hpp"

namespace agnomap::micronet {

double accuracy(const Classifier& model, const Dataset& data) {
    if (data.empty()) return 0.0;
    constexpr std::size_t chunk = 256;
    std::size_t hits = 0;
    for (std::size_t first = 0; first < data.size(); first += chunk) {
        const std::size_t count = std::min(chunk, data.size() - first);
        const Batch logits = model.forward(data.images.middleRows(Eigen::Index(first), Eigen::Index(count)));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index arg;
            logits.row(i).maxCoeff(&arg);
            hits += arg == data.labels[first + std::size_t(i)];
        }
    }
    return double(hits) / double(data.size());
}

TrainReport train(Classifier& model, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(cfg.lr > 0.f)) throw ConfigError("train: lr must be positive");
    if (train_set.empty()) throw InputError("train: empty dataset");
    train_set.validate();
    if (train_set.shape != model.input_shape()) throw ConfigError("train: dataset shape does not match model input");
    for (int y : train_set.labels)
        if (y < 0 || y >= model.num_classes()) throw InputError("train: label outside [0, L)");

    TrainReport report;
    report.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    AdamState<float> adam;
    adam.lr = cfg.lr;
    Rng rng(mix_seed(cfg.seed, 0x747261696eull));
    const std::size_t n = train_set.size();
    const std::size_t b = std::size_t(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.permutation(n);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < n; first += b) {
            const std::span<const std::size_t> idx(order.data() + first, std::min(b, n - first));
            const Batch x = train_set.gather(idx);
            const std::vector<int> y = train_set.gather_labels(idx);
            Gradients<float> grads;
            const double loss = model.param_grad(x, y, grads);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "train: loss diverged (" << loss << ") at epoch " << epoch << ", batch " << batches
                    << "; try a lower learning rate (lr=" << cfg.lr << ")";
                throw TrainingError(msg.str());
            }
            adam_step(adam, model.parameters(), grads);
            epoch_loss += loss;
            ++batches;
        }
        report.final_loss = epoch_loss / double(batches);
        report.epochs_run = epoch + 1;
    }
    report.train_accuracy = accuracy(model, train_set);
    if (test_set) report.test_accuracy = accuracy(model, *test_set);
    return report;
}

}  // namespace agnomap::micronet
