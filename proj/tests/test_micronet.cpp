#include <doctest.h>

#include <cmath>
#include <sstream>

#include "agnomap/micronet/adam.hpp"
#include "agnomap/micronet/checkpoint.hpp"
#include "support.hpp"

using namespace testing;
using micronet::Classifier;

TEST_SUITE("micronet") {

TEST_CASE("input gradients match central differences for every layer kind") {
    for (const auto& inst : gradient_instances()) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            Network<double> net(inst.shape, inst.specs);
            net.init(seed);
            const auto batch = random_batch<double>(2, inst.shape, 100 + seed);
            CAPTURE(inst.name);
            CAPTURE(seed);
            CHECK(input_grad_error(net, batch, int(seed % net.num_classes())) < 1e-3);
        }
    }
}

TEST_CASE("parameter gradients match central differences for every layer kind") {
    for (const auto& inst : gradient_instances()) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            Network<double> net(inst.shape, inst.specs);
            net.init(seed);
            // biases start at zero; give them a value so their gradient path is not trivial
            for (auto& l : net.layers())
                if (l.has_params()) l.bias.setConstant(0.05);
            const auto batch = random_batch<double>(3, inst.shape, 200 + seed);
            const auto y = random_labels(3, net.num_classes(), seed);
            CAPTURE(inst.name);
            CHECK(param_grad_error(net, batch, y) < 1e-3);
        }
    }
}

TEST_CASE("single-precision gradients agree with the double-precision network") {
    const auto inst = gradient_instances().back();
    Classifier net(inst.shape, inst.specs);
    net.init(9);
    const Network<double> ref = net.cast<double>();
    const auto batch = random_batch<float>(4, inst.shape, 17);
    const RowMatrix<double> batch_d = batch.cast<double>();
    CHECK(rel_error(net.input_grad(batch, 1), ref.input_grad(batch_d, 1)) < 1e-5);
}

TEST_CASE("loss of uniform logits is log L") {
    RowMatrix<float> logits = RowMatrix<float>::Zero(3, 4);
    const std::vector<int> y{0, 1, 3};
    CHECK(micronet::loss_ce<float>(logits, y) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
    const std::vector<int> bad{0, 4, 1};
    CHECK_THROWS_AS(micronet::loss_ce<float>(logits, bad), InputError);
}

TEST_CASE("cross-entropy of a hand-computed softmax and its shift invariance") {
    RowMatrix<double> logits(1, 2);
    logits << 1.0, 0.0;
    const std::vector<int> y{0};
    CHECK(micronet::loss_ce<double>(logits, y) == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))));
    CHECK(micronet::loss_ce<double>(logits, y) == doctest::Approx(0.3133).epsilon(1e-4));
    const RowMatrix<double> shifted = logits.array() + 37.5;
    CHECK(std::abs(micronet::loss_ce<double>(shifted, y) - micronet::loss_ce<double>(logits, y)) < 1e-6);
}

TEST_CASE("gradient sanity: dead paths, duplicated samples, zero inputs, logit bias") {
    const auto inst = gradient_instances().back();
    Network<double> net(inst.shape, inst.specs);
    net.init(4);
    const auto batch = random_batch<double>(3, inst.shape, 8);

    Network<double> dead = net;
    dead.layers().back().weight.setZero();
    dead.layers().back().bias << 0.3, -0.1, 0.2;
    CHECK(dead.input_grad(batch, 1).cwiseAbs().maxCoeff() < 1e-12);

    RowMatrix<double> twice(6, batch.cols());
    twice << batch, batch;
    const auto g1 = net.input_grad(batch, 2), g2 = net.input_grad(twice, 2);
    CHECK(g2.topRows(3) == g1);
    CHECK(g2.bottomRows(3) == g1);

    Network<double> unbiased = net;
    for (auto& l : unbiased.layers())
        if (l.has_params()) l.bias.setZero();
    auto grads = unbiased.zero_gradients();
    const RowMatrix<double> zeros = RowMatrix<double>::Zero(2, batch.cols());
    unbiased.param_grad(zeros, std::vector<int>{0, 2}, grads);
    CHECK(grads[0].cwiseAbs().maxCoeff() == 0.0);  // first conv weights
    CHECK(grads[2].cwiseAbs().maxCoeff() == 0.0);  // second conv weights

    net.param_grad(batch.topRows(1), std::vector<int>{1}, grads);
    CHECK(std::abs(grads.back().sum()) < 1e-12);  // softmax minus one-hot sums to zero
}

TEST_CASE("Adam leaves parameters alone for a zero gradient and descends a quadratic bowl") {
    micronet::AdamState<double> state;
    state.lr = 0.1;
    Vector<double> p(2);
    p << 1.0, -2.0;
    const Vector<double> start = p;
    micronet::adam_step(state, std::vector<Vector<double>*>{&p}, std::vector<Vector<double>>{Vector<double>::Zero(2)});
    CHECK(p == start);

    micronet::AdamState<double> bowl;
    bowl.lr = 0.1;
    Vector<double> x = Vector<double>::Constant(1, 3.0);
    auto f = [](double v) { return (v - 1.0) * (v - 1.0); };
    double prev = f(x[0]);
    for (int k = 0; k < 2; ++k) {
        micronet::adam_step(bowl, std::vector<Vector<double>*>{&x},
                            std::vector<Vector<double>>{Vector<double>::Constant(1, 2.0 * (x[0] - 1.0))});
        CHECK(f(x[0]) < prev);
        prev = f(x[0]);
    }
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    RowMatrix<float> logits(2, 3);
    logits << 1000.f, 0.f, -1000.f, 0.1f, 0.2f, 0.3f;
    const auto p = micronet::softmax<float>(logits);
    CHECK(p.allFinite());
    for (Eigen::Index i = 0; i < 2; ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("max pooling passes gradient only to the first maximum of a tied window") {
    const ImageShape shape{2, 2, 1};
    const std::vector<LayerSpec> specs{LayerSpec::maxpool(), LayerSpec::flatten(), LayerSpec::dense(2)};
    Network<double> net(shape, specs);
    net.layers()[2].weight << 1.0, -1.0;
    RowMatrix<double> x(1, 4);
    x << 0.5, 0.5, 0.2, 0.1;
    const auto g = net.input_grad(x, 0);
    CHECK(g(0, 0) != 0.0);
    CHECK(g(0, 1) == 0.0);
    CHECK(g(0, 2) == 0.0);
    CHECK(g(0, 3) == 0.0);
}

TEST_CASE("construction rejects inconsistent stacks") {
    const ImageShape s{8, 8, 3};
    const std::vector<LayerSpec> even{LayerSpec::conv(4, 2), LayerSpec::flatten(), LayerSpec::dense(2)};
    CHECK_THROWS_AS(Classifier(s, even), ConfigError);
    const std::vector<LayerSpec> no_flatten{LayerSpec::conv(4), LayerSpec::dense(2)};
    CHECK_THROWS_AS(Classifier(s, no_flatten), ConfigError);
    const std::vector<LayerSpec> one_logit{LayerSpec::flatten(), LayerSpec::dense(1)};
    CHECK_THROWS_AS(Classifier(s, one_logit), ConfigError);
    const std::vector<LayerSpec> spatial_out{LayerSpec::conv(4)};
    CHECK_THROWS_AS(Classifier(s, spatial_out), ConfigError);
    CHECK_THROWS_AS(Classifier({0, 8, 3}, micronet::default_architecture(4)), ConfigError);
}

TEST_CASE("batch width and labels are checked") {
    Classifier net({8, 8, 3}, micronet::default_architecture(3, 2));
    net.init(1);
    CHECK_THROWS_AS(net.forward(RowMatrix<float>::Zero(1, 10)), InputError);
    const auto batch = random_batch<float>(2, {8, 8, 3}, 1);
    CHECK_THROWS_AS(net.input_grad(batch, 3), InputError);
    CHECK_THROWS_AS(net.input_grad(batch, -1), InputError);
}

TEST_CASE("Adam first step moves every coordinate by lr against the gradient sign") {
    micronet::AdamState<float> state;
    state.lr = 0.1f;
    VectorXf p = VectorXf::Zero(5);
    VectorXf g(5);
    g << 3.f, -0.001f, 250.f, -7.f, 1e-3f;
    micronet::adam_step(state, std::vector<VectorXf*>{&p}, std::vector<VectorXf>{g});
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(-0.1f * (g[i] > 0 ? 1.f : -1.f)).epsilon(1e-4));
}

TEST_CASE("Adam matches a hand-rolled bias-corrected update") {
    micronet::AdamState<double> state;
    state.lr = 0.01;
    Vector<double> p = Vector<double>::Constant(3, 0.5), ref = p;
    Vector<double> m = Vector<double>::Zero(3), v = Vector<double>::Zero(3);
    Rng rng(4);
    for (int k = 1; k <= 20; ++k) {
        Vector<double> g(3);
        for (auto& x : g) x = rng.uniform(-1.0, 1.0);
        micronet::adam_step(state, std::vector<Vector<double>*>{&p}, std::vector<Vector<double>>{g});
        for (int i = 0; i < 3; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, k)), vh = v[i] / (1 - std::pow(0.999, k));
            ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    CHECK((p - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training separates a tiny two-class problem and is reproducible") {
    const ImageShape s{8, 8, 1};
    Dataset data{s, RowMatrix<float>(40, s.size()), {}, 0};
    Rng rng(2);
    for (int i = 0; i < 40; ++i) {
        const int y = i % 2;
        data.labels.push_back(y);
        for (Eigen::Index j = 0; j < s.size(); ++j)
            data.images(i, j) = float(std::clamp((y ? 0.7 : 0.3) + rng.uniform(-0.2, 0.2), 0.0, 1.0));
    }
    auto make = [&] {
        Classifier net(s, micronet::default_architecture(2, 2));
        net.init(3);
        micronet::TrainConfig cfg;
        cfg.epochs = 15;
        cfg.batch_size = 8;
        cfg.lr = 0.01f;
        const auto report = micronet::train(net, data, nullptr, cfg);
        CHECK(report.epochs_run == 15);
        CHECK(std::isnan(report.test_accuracy));
        return net;
    };
    const Classifier a = make(), b = make();
    CHECK(micronet::accuracy(a, data) >= 0.95);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(*a.parameters()[i] == *b.parameters()[i]);
}

TEST_CASE("zero epochs leave the model unchanged") {
    const Toy& t = toy();
    Classifier net(t.train.shape, micronet::default_architecture(4));
    net.init(8);
    const Classifier before = net;
    micronet::TrainConfig cfg;
    cfg.epochs = 0;
    micronet::train(net, t.train, nullptr, cfg);
    for (std::size_t i = 0; i < net.parameters().size(); ++i) CHECK(*net.parameters()[i] == *before.parameters()[i]);
}

TEST_CASE("training diverges loudly on a non-finite loss") {
    const Toy& t = toy();
    Classifier net(t.train.shape, micronet::default_architecture(4));
    net.init(8);
    micronet::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 1e30f;
    CHECK_THROWS_AS(micronet::train(net, t.train.slice(0, 64), nullptr, cfg), TrainingError);
}

TEST_CASE("toy model learns the shapes") {
    CHECK(toy().test_accuracy >= 0.8);
}

TEST_CASE("checkpoint round trip is exact and byte-stable") {
    Classifier net({8, 8, 3}, micronet::default_architecture(3, 2));
    net.init(21);
    std::ostringstream a;
    micronet::write_records(a, micronet::to_records(net));
    std::istringstream in(a.str());
    const Classifier back = micronet::from_records(micronet::read_records(in));
    std::ostringstream b;
    micronet::write_records(b, micronet::to_records(back));
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("AGNM1", 0) == 0);
    const auto batch = random_batch<float>(3, {8, 8, 3}, 4);
    CHECK(net.forward(batch) == back.forward(batch));
}

TEST_CASE("corrupt checkpoints are rejected") {
    Classifier net({8, 8, 3}, micronet::default_architecture(3, 2));
    net.init(1);
    std::ostringstream out;
    micronet::write_records(out, micronet::to_records(net));
    const std::string good = out.str();

    std::istringstream bad_magic("AGNM2" + good.substr(5));
    CHECK_THROWS_AS(micronet::read_records(bad_magic), InputError);
    std::istringstream truncated(good.substr(0, good.size() - 7));
    CHECK_THROWS_AS(micronet::read_records(truncated), InputError);

    auto records = micronet::to_records(net);
    records[1].floats.pop_back();
    CHECK_THROWS_AS(micronet::from_records(records), InputError);
    CHECK_THROWS_AS(micronet::load("/nonexistent/model.agnm"), InputError);
}

TEST_CASE("conv base activations of a zero input through zero biases vanish") {
    Classifier net({12, 10, 3}, micronet::default_architecture(3, 2));
    net.init(2);
    CHECK(net.conv_base_activations(VectorXf::Zero(360)).data.cwiseAbs().maxCoeff() == 0.f);
    // three 2x2 pools: 12x10 -> 6x5 -> 3x2, the last conv sees 3x2 with 4w channels
    CHECK(net.conv_base_activations(VectorXf::Zero(360)).shape == std::vector<int>{3, 2, 8});
    const std::vector<LayerSpec> head{LayerSpec::flatten(), LayerSpec::dense(2)};
    Classifier dense_only({2, 2, 1}, head);
    CHECK_THROWS_AS(dense_only.conv_base_activations(VectorXf::Zero(4)), ConfigError);
}

TEST_CASE("conv base activations come from the last convolution after its ReLU") {
    Classifier net({8, 8, 3}, micronet::default_architecture(3, 2));
    net.init(2);
    CHECK(net.last_conv_index() == 6);
    const auto acts = net.conv_base_activations(random_batch<float>(1, {8, 8, 3}, 3).row(0).transpose());
    CHECK(acts.shape == std::vector<int>{2, 2, 8});
    CHECK(acts.data.minCoeff() >= 0.f);
}

}  // TEST_SUITE
