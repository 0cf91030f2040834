#include <doctest.h>

#include <fstream>

#include "agnomap/trojanscan.hpp"
#include "support.hpp"

using namespace testing;
using namespace agnomap::trojanscan;

namespace {

ScanConfig tiny_scan() {
    ScanConfig cfg;
    cfg.pipeline.cycles = 1;
    cfg.pipeline.mapper.iterations = 10;
    cfg.pipeline.refine.iterations = 5;
    cfg.runs = 3;
    cfg.seed = 4;
    return cfg;
}

}  // namespace

TEST_SUITE("trojanscan") {

TEST_CASE("trigger energy is the ratio of mean magnitudes inside and outside the mask") {
    const ImageShape s = datagen::kDefaultShape;
    const VectorXf mask = datagen::square_mask(s, 24, 24, 8);
    SaliencyMap m = SaliencyMap::zeros(s, 0, 4.5f);
    for (Eigen::Index p = 0; p < s.pixels(); ++p) {
        const float a = mask[p] > 0.f ? 2.f : 0.5f;
        m.nu.segment(p * 3, 3) << a, -a, a;
    }
    CHECK(trigger_energy(m, mask) == doctest::Approx(4.0).epsilon(1e-12));

    m.nu.setConstant(-0.3f);
    CHECK(trigger_energy(m, mask) == doctest::Approx(1.0).epsilon(1e-12));

    // support only inside the mask hits the floor on the outside mean
    m.nu.setZero();
    for (Eigen::Index p = 0; p < s.pixels(); ++p)
        if (mask[p] > 0.f) m.nu.segment(p * 3, 3).setConstant(0.1f);
    CHECK(trigger_energy(m, mask) == doctest::Approx(0.1 / 1e-9).epsilon(1e-6));

    CHECK_THROWS_AS(trigger_energy(m, VectorXf::Zero(s.pixels())), InputError);
    CHECK_THROWS_AS(trigger_energy(m, VectorXf::Ones(10)), InputError);
}

TEST_CASE("localize returns the largest connected blob, not the brightest") {
    const ImageShape s = datagen::kDefaultShape;
    SaliencyMap m = SaliencyMap::zeros(s, 0, 4.5f);
    auto paint = [&](int top, int left, int size, float v) {
        for (int y = top; y < top + size; ++y)
            for (int x = left; x < left + size; ++x) m.nu[(Eigen::Index(y) * s.width + x) * 3 + 1] = v;
    };
    paint(10, 20, 4, 0.5f);
    paint(2, 2, 2, -0.9f);
    const Region r = localize(m);
    CHECK(r.pixels == 16);
    CHECK(r.top == 10);
    CHECK(r.left == 20);
    CHECK(r.bottom == 13);
    CHECK(r.right == 23);
    CHECK(r.mask.sum() == 16.f);
    CHECK(r.mask[10 * 32 + 20] == 1.f);
    CHECK(r.mask[2 * 32 + 2] == 0.f);

    CHECK(localize(SaliencyMap::zeros(s, 0, 1.f)).pixels == 0);
}

TEST_CASE("median and verdict strings") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS_AS(median({}), InputError);
    CHECK(std::string(to_string(Verdict::BackdoorSuspect)) == "backdoor-suspect");
    CHECK(std::string(to_string(Verdict::CleanConsistent)) == "clean-consistent");
}

TEST_CASE("scan is reproducible and applies the threshold rule") {
    const Toy& t = toy();
    const VectorXf mask = datagen::square_mask(t.train.shape, 24, 24, 8);
    const ScanConfig cfg = tiny_scan();
    const ScanReport a = scan(t.model, t.train, 1, mask, cfg);
    const ScanReport b = scan(t.model, t.train, 1, mask, cfg);
    REQUIRE(a.ratios.size() == 3);
    CHECK(a.ratios == b.ratios);
    CHECK(a.maps[2].nu == b.maps[2].nu);
    CHECK(a.median_ratio == median(a.ratios));
    CHECK(a.reference_ratio == 1.0);
    CHECK(a.threshold == 2.0);
    CHECK((a.verdict == Verdict::BackdoorSuspect) == (a.median_ratio >= 2.0));
    CHECK(a.maps[0].nu != a.maps[1].nu);

    const ScanReport low = scan(t.model, t.train, 1, mask, cfg, a.median_ratio / 4);
    CHECK(low.threshold == doctest::Approx(a.median_ratio / 2));
    CHECK(low.verdict == Verdict::BackdoorSuspect);
    const ScanReport high = scan(t.model, t.train, 1, mask, cfg, a.median_ratio);
    CHECK(high.verdict == Verdict::CleanConsistent);

    const auto dir = scratch_dir("scan");
    write_scan_report(a, dir / "scan_report.txt");
    std::ifstream in(dir / "scan_report.txt");
    std::string line;
    bool found = false;
    while (std::getline(in, line))
        if (line == std::string("verdict = ") + to_string(a.verdict)) found = true;
    CHECK(found);

    ScanConfig bad = cfg;
    bad.runs = 0;
    CHECK_THROWS_AS(scan(t.model, t.train, 1, mask, bad), ConfigError);
}

TEST_CASE("a model trained on clean data ignores the trigger") {
    const Toy& t = toy();
    const auto trigger = datagen::make_trigger(datagen::TriggerPattern::Square, t.train.shape, 1);
    CHECK(attack_success_rate(t.model, t.test, trigger) < 0.5);
}

TEST_CASE("compromised training gives up loudly when thresholds are out of reach") {
    const Toy& t = toy();
    const auto trigger = datagen::make_trigger(datagen::TriggerPattern::Checkerboard, t.train.shape, 2);
    CompromiseConfig cfg;
    cfg.train.epochs = 1;
    cfg.width = 2;
    cfg.max_attempts = 2;
    cfg.extra_epochs = 1;
    cfg.min_clean_accuracy = 1.01;
    CHECK_THROWS_AS(train_compromised(t.train.slice(0, 200), t.test, trigger, cfg), TrainingError);

    cfg.min_clean_accuracy = 0.0;
    cfg.min_attack_success = 0.0;
    const CompromisedModel m = train_compromised(t.train.slice(0, 200), t.test, trigger, cfg);
    CHECK(m.attempts == 1);
    CHECK(m.epochs == 1);
    CHECK(m.clean_accuracy == doctest::Approx(micronet::accuracy(m.model, t.test)));
}

TEST_CASE("compromised training plants a working backdoor") {
    const Toy& t = toy();
    const auto trigger = datagen::make_trigger(datagen::TriggerPattern::Square, t.train.shape, 1);
    CompromiseConfig cfg;
    cfg.train.epochs = 8;
    cfg.min_clean_accuracy = 0.8;
    const CompromisedModel m = train_compromised(t.train, t.test, trigger, cfg);
    CHECK(m.clean_accuracy >= 0.8);
    CHECK(m.attack_success >= 0.95);
}

}  // TEST_SUITE
