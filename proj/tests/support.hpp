#ifndef AGNOMAP_TESTS_SUPPORT_HPP
#define AGNOMAP_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "agnomap/datagen.hpp"
#include "agnomap/micronet/network.hpp"
#include "agnomap/micronet/train.hpp"
#include "agnomap/random.hpp"

namespace testing {

using namespace agnomap;
using micronet::LayerSpec;
using micronet::Network;

template <typename Scalar>
RowMatrix<Scalar> random_batch(Eigen::Index rows, ImageShape shape, std::uint64_t seed, double lo = 0.0,
                               double hi = 1.0) {
    Rng rng(seed);
    RowMatrix<Scalar> b(rows, shape.size());
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = Scalar(rng.uniform(lo, hi));
    return b;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> y(n);
    for (auto& v : y) v = int(rng.index(std::size_t(classes)));
    return y;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
template <typename A, typename B>
double rel_error(const A& a, const B& b) {
    const double den = std::max(a.template cast<double>().norm(), b.template cast<double>().norm());
    return den == 0.0 ? 0.0 : (a.template cast<double>() - b.template cast<double>()).norm() / den;
}

template <typename Scalar>
double mean_loss(const Network<Scalar>& net, const RowMatrix<Scalar>& batch, const std::vector<int>& y) {
    return micronet::loss_ce<Scalar>(net.forward(batch), y);
}

/// Central differences of the summed per-sample loss w.r.t. every input pixel,
/// one sample at a time, compared against input_grad.
template <typename Scalar>
double input_grad_error(const Network<Scalar>& net, const RowMatrix<Scalar>& batch, int label, double h = 1e-5) {
    const RowMatrix<Scalar> analytic = net.input_grad(batch, label);
    RowMatrix<double> numeric(batch.rows(), batch.cols());
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        RowMatrix<Scalar> row = batch.row(i);
        const std::vector<int> y{label};
        for (Eigen::Index j = 0; j < batch.cols(); ++j) {
            const Scalar keep = row(0, j);
            row(0, j) = keep + Scalar(h);
            const double up = mean_loss(net, row, y);
            row(0, j) = keep - Scalar(h);
            const double down = mean_loss(net, row, y);
            row(0, j) = keep;
            numeric(i, j) = (up - down) / (2 * h);
        }
    }
    return rel_error(analytic, numeric);
}

/// Worst relative error over the parameter blocks of param_grad against central differences.
template <typename Scalar>
double param_grad_error(Network<Scalar> net, const RowMatrix<Scalar>& batch, const std::vector<int>& y,
                        double h = 1e-5) {
    auto grads = net.zero_gradients();
    net.param_grad(batch, y, grads);
    double worst = 0.0;
    auto params = net.parameters();
    for (std::size_t b = 0; b < params.size(); ++b) {
        Vector<double> numeric(params[b]->size());
        for (Eigen::Index j = 0; j < params[b]->size(); ++j) {
            const Scalar keep = (*params[b])[j];
            (*params[b])[j] = keep + Scalar(h);
            const double up = mean_loss(net, batch, y);
            (*params[b])[j] = keep - Scalar(h);
            const double down = mean_loss(net, batch, y);
            (*params[b])[j] = keep;
            numeric[j] = (up - down) / (2 * h);
        }
        worst = std::max(worst, rel_error(grads[b], numeric));
    }
    return worst;
}

/// Small random instance exercising one layer kind plus the head it needs.
struct Instance {
    std::string name;
    ImageShape shape;
    std::vector<LayerSpec> specs;
};

inline std::vector<Instance> gradient_instances() {
    using micronet::Padding;
    return {
        {"dense", {1, 1, 6}, {LayerSpec::flatten(), LayerSpec::dense(3)}},
        {"conv same", {5, 5, 2}, {LayerSpec::conv(3, 3), LayerSpec::flatten(), LayerSpec::dense(3)}},
        {"conv valid", {6, 5, 2}, {LayerSpec::conv(2, 3, Padding::Valid), LayerSpec::flatten(), LayerSpec::dense(4)}},
        {"conv 1x1", {4, 4, 3}, {LayerSpec::conv(2, 1), LayerSpec::flatten(), LayerSpec::dense(2)}},
        {"relu", {1, 1, 8}, {LayerSpec::flatten(), LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(3)}},
        {"maxpool", {6, 6, 2}, {LayerSpec::maxpool(), LayerSpec::flatten(), LayerSpec::dense(3)}},
        {"maxpool odd", {5, 7, 1}, {LayerSpec::maxpool(), LayerSpec::flatten(), LayerSpec::dense(2)}},
        {"stack", {8, 8, 3},
         {LayerSpec::conv(4), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::conv(4), LayerSpec::relu(),
          LayerSpec::maxpool(), LayerSpec::flatten(), LayerSpec::dense(3)}},
    };
}

/// Small trained 4-class model shared by the tests of one binary.
struct Toy {
    Dataset train;
    Dataset test;
    micronet::Classifier model;
    double test_accuracy = 0.0;
};

inline const Toy& toy() {
    static const Toy t = [] {
        Toy out;
        const auto specs = datagen::default_concepts(4);
        out.train = datagen::generate(specs, 300, 11, datagen::kDefaultShape);
        out.test = datagen::generate(specs, 50, 12, datagen::kDefaultShape);
        out.model = micronet::Classifier(datagen::kDefaultShape, micronet::default_architecture(4));
        out.model.init(5);
        micronet::TrainConfig cfg;
        cfg.epochs = 8;
        cfg.seed = 3;
        out.test_accuracy = micronet::train(out.model, out.train, &out.test, cfg).test_accuracy;
        return out;
    }();
    return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("agnomap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing

#endif  // AGNOMAP_TESTS_SUPPORT_HPP
