#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "agnomap/mapper.hpp"
#include "agnomap/micronet/adam.hpp"
#include "support.hpp"

using namespace testing;
using namespace agnomap::mapper;

namespace {

VectorXf random_map(Eigen::Index n, std::uint64_t seed, double scale) {
    Rng rng(seed);
    VectorXf v(n);
    for (auto& x : v) x = float(rng.uniform(-scale, scale));
    return v;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("saliency_map") {

TEST_CASE("projection keeps maps inside the ball and is idempotent") {
    for (float eta : {1.f, 4.5f, 30.f}) {
        for (std::uint64_t s = 0; s < 100; ++s) {
            const VectorXf nu = random_map(3072, s, s % 2 ? 0.01 : 2.0);
            const VectorXf p = project(nu, eta);
            const double expected = std::min(nu.cast<double>().norm(), double(eta));
            CHECK(std::abs(p.cast<double>().norm() - expected) <= 1e-5);
            CHECK(p.cast<double>().norm() <= double(eta));
            CHECK(project(p, eta) == p);
        }
    }
    CHECK(project(VectorXf::Zero(4), 1.f) == VectorXf::Zero(4));
    CHECK_THROWS_AS(project(VectorXf::Ones(4), 0.f), ConfigError);
}

TEST_CASE("display normalization spans [0, 1] and maps a constant to gray") {
    VectorXf nu(4);
    nu << -2.f, 0.f, 2.f, 1.f;
    const VectorXf d = display_normalize(nu);
    CHECK(d[0] == 0.f);
    CHECK(d[1] == 0.5f);
    CHECK(d[2] == 1.f);
    CHECK(d[3] == 0.75f);
    CHECK(display_normalize(VectorXf::Constant(5, 3.f)) == VectorXf::Constant(5, 0.5f));
}

TEST_CASE("map checkpoints round trip exactly") {
    const auto dir = scratch_dir("mapfile");
    SaliencyMap m = SaliencyMap::zeros({4, 4, 3}, 2, 4.5f);
    m.nu = random_map(48, 1, 0.3);
    m.iterations = 17;
    save_map(m, dir / "m.map");
    const SaliencyMap back = load_map(dir / "m.map");
    CHECK(back.shape == m.shape);
    CHECK(back.nu == m.nu);
    CHECK(back.label == 2);
    CHECK(back.eta == 4.5f);
    CHECK(back.iterations == 17);
    CHECK(file_bytes(dir / "m.map").rfind("AGNM1", 0) == 0);
    CHECK_THROWS_AS(load_map(dir / "none.map"), InputError);
}

}  // TEST_SUITE

TEST_SUITE("mapper") {

TEST_CASE("first moment direction is the sign of the gradient") {
    MapperConfig cfg;
    MapperState s(6);
    VectorXf g(6);
    g << 0.5f, -3.f, 1e-4f, -1e-4f, 200.f, -0.25f;
    const VectorXf v = moment_direction(s, g, cfg);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(v[i] == doctest::Approx(g[i] > 0 ? 1.0 : -1.0).epsilon(1e-5));
    CHECK(s.k == 1);
}

TEST_CASE("moment direction equals bias-corrected Adam for a gradient stream") {
    MapperConfig cfg;
    cfg.epsilon = 0.f;
    MapperState s(8);
    micronet::AdamState<double> adam;
    adam.lr = 1.0;
    adam.epsilon = 0.0;
    Rng rng(12);
    for (int k = 1; k <= 50; ++k) {
        VectorXf g(8);
        for (auto& x : g) x = float(rng.uniform(-1.0, 1.0));
        const VectorXf v = moment_direction(s, g, cfg);
        Vector<double> p = Vector<double>::Zero(8);
        micronet::adam_step(adam, std::vector<Vector<double>*>{&p}, std::vector<Vector<double>>{g.cast<double>()});
        CHECK(((-p) - v.cast<double>()).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, p.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("nudging subtracts and clips to the dynamic range") {
    Batch b(1, 3);
    b << 0.2f, 0.9f, 0.5f;
    VectorXf nu(3);
    nu << 0.5f, -0.5f, 0.1f;
    const Batch out = nudge_batch(b, nu);
    CHECK(out(0, 0) == 0.f);
    CHECK(out(0, 1) == 1.f);
    CHECK(out(0, 2) == doctest::Approx(0.4f));
    CHECK_THROWS_AS(nudge_batch(b, VectorXf::Zero(2)), InputError);
}

TEST_CASE("config validation") {
    MapperConfig c;
    CHECK_NOTHROW(c.validate());
    c.iterations = 0;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto mutate) {
        MapperConfig m;
        mutate(m);
        CHECK_THROWS_AS(m.validate(), ConfigError);
    };
    bad([](MapperConfig& m) { m.batch_size = 0; });
    bad([](MapperConfig& m) { m.iterations = -1; });
    bad([](MapperConfig& m) { m.eta = 0.f; });
    bad([](MapperConfig& m) { m.beta1 = 0.9995f; });
    bad([](MapperConfig& m) { m.beta2 = 1.f; });
}

TEST_CASE("branch selection keeps the direction with the better probe score") {
    const Toy& t = toy();
    const Batch batch = t.test.images.topRows(32);
    const VectorXf x = expected_grad(t.model, nudge_batch(batch, VectorXf::Zero(batch.cols())), 2);
    // moving nu along +x nudges inputs along -grad, which should favour the label
    const BranchDecision d = branch_select(t.model, batch, VectorXf::Zero(batch.cols()), x, 2, ProbeScore::Probability);
    CHECK(d.plus == (d.score_plus >= d.score_minus));
    CHECK(d.update == (d.plus ? x : VectorXf(-x)));
    CHECK(d.plus);
    const BranchDecision flipped =
        branch_select(t.model, batch, VectorXf::Zero(batch.cols()), -x, 2, ProbeScore::Probability);
    CHECK_FALSE(flipped.plus);
    CHECK(flipped.update == x);
}

TEST_CASE("zero iterations return the seed map") {
    const Toy& t = toy();
    MapperConfig cfg;
    cfg.iterations = 0;
    SaliencyMap seed = SaliencyMap::zeros(t.train.shape, 1, cfg.eta);
    seed.nu = project(random_map(seed.nu.size(), 3, 0.1), 1.f);
    const SaliencyMap out = run_mapper(t.model, t.train, 1, cfg, seed);
    CHECK(out.nu == seed.nu);
}

TEST_CASE("mapper keeps the norm bounded, is reproducible and raises the concept") {
    const Toy& t = toy();
    MapperConfig cfg;
    cfg.batch_size = 32;
    cfg.iterations = 40;
    cfg.eta = 4.5f;
    cfg.seed = 5;
    const int label = 0;
    const auto seed_map = SaliencyMap::zeros(t.train.shape, label, cfg.eta);
    MapperTrace trace;
    const SaliencyMap a = run_mapper(t.model, t.train, label, cfg, seed_map, &trace);
    const SaliencyMap b = run_mapper(t.model, t.train, label, cfg, seed_map);
    CHECK(a.nu == b.nu);
    CHECK(a.iterations == 40);
    REQUIRE(trace.norms.size() == 40);
    for (double n : trace.norms) CHECK(n <= 4.5 + 1e-5);
    CHECK(trace.norms.back() == doctest::Approx(4.5).epsilon(1e-5));
    const double before = t.model.prediction_rate(t.test.images, label);
    const double after = t.model.prediction_rate(nudge_batch(t.test.images, a.nu), label);
    CHECK(after > before + 0.3);

    cfg.seed = 6;
    CHECK(run_mapper(t.model, t.train, label, cfg, seed_map).nu != a.nu);
}

TEST_CASE("mapper input checks") {
    const Toy& t = toy();
    MapperConfig cfg;
    cfg.iterations = 2;
    cfg.batch_size = 8;
    const auto seed_map = SaliencyMap::zeros(t.train.shape, 0, cfg.eta);
    CHECK_THROWS_AS(run_mapper(t.model, t.train, 4, cfg, seed_map), InputError);
    SaliencyMap big = seed_map;
    big.nu.setConstant(1.f);
    CHECK_THROWS_AS(run_mapper(t.model, t.train, 0, cfg, big), InputError);
    SaliencyMap wrong = SaliencyMap::zeros({8, 8, 3}, 0, cfg.eta);
    CHECK_THROWS_AS(run_mapper(t.model, t.train, 0, cfg, wrong), ConfigError);
    Dataset empty{t.train.shape, Batch(0, t.train.shape.size()), {}, 0};
    CHECK_THROWS_AS(run_mapper(t.model, empty, 0, cfg, seed_map), InputError);
}

TEST_CASE("a pool smaller than the batch samples with replacement and warns") {
    const Toy& t = toy();
    MapperConfig cfg;
    cfg.iterations = 2;
    cfg.batch_size = 16;
    std::vector<std::string> warnings;
    const auto previous = set_warning_handler([&](const std::string& w) { warnings.push_back(w); });
    MapperTrace trace;
    run_mapper(t.model, t.train.slice(0, 5), 0, cfg, SaliencyMap::zeros(t.train.shape, 0, cfg.eta), &trace);
    set_warning_handler(previous);
    CHECK(warnings.size() == 1);
    CHECK(trace.sampled_with_replacement);
}

TEST_CASE("batch sampler covers the pool once per epoch") {
    BatchSampler s(10, 4, 3);
    CHECK_FALSE(s.with_replacement());
    std::vector<int> seen(10, 0);
    for (int i = 0; i < 5; ++i)  // 20 draws = two epochs
        for (std::size_t j : s.next()) ++seen[j];
    for (int c : seen) CHECK(c == 2);
}

}  // TEST_SUITE
