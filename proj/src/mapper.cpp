#include "agnomap/mapper.hpp"

#include <cmath>
#include <string>

#include "agnomap/random.hpp"

namespace agnomap::mapper {

void MapperConfig::validate() const {
    if (batch_size < 1) throw ConfigError("mapper: batch size b must be >= 1");
    if (iterations < 0) throw ConfigError("mapper: iterations K must be >= 0");
    if (!(eta > 0.f)) throw ConfigError("mapper: eta must be positive");
    if (!(beta1 > 0.f && beta1 < beta2 && beta2 < 1.f)) throw ConfigError("mapper: need 0 < beta1 < beta2 < 1");
    if (!(epsilon >= 0.f)) throw ConfigError("mapper: epsilon must be >= 0");
}

Batch nudge_batch(const Batch& batch, const VectorXf& nu) {
    if (nu.size() != batch.cols()) throw InputError("nudge_batch: map size does not match batch");
    return (batch.rowwise() - nu.transpose()).cwiseMax(0.f).cwiseMin(1.f);
}

VectorXf expected_grad(const Classifier& model, const Batch& nudged, int label) {
    if (nudged.rows() == 0) throw InputError("expected_grad: empty batch");
    const Batch g = model.input_grad(nudged, label);
    Vector<double> sum = Vector<double>::Zero(g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) sum += g.row(i).transpose().cast<double>();
    return (sum / double(g.rows())).cast<float>();
}

VectorXf moment_direction(MapperState& s, const VectorXf& x, const MapperConfig& cfg) {
    if (x.size() != s.mu.size()) throw InputError("moment_direction: gradient size mismatch");
    ++s.k;
    s.mu = cfg.beta1 * s.mu + (1.f - cfg.beta1) * x;
    s.sigma = cfg.beta2 * s.sigma + (1.f - cfg.beta2) * x.cwiseProduct(x);
    const double k = double(s.k);
    const float num = float(std::sqrt(1.0 - std::pow(double(cfg.beta2), k)));
    const float den = float(1.0 - std::pow(double(cfg.beta1), k));
    return ((s.mu.array() * num) / (s.sigma.array().sqrt() * den + cfg.epsilon)).matrix();
}

double probe_score(const Classifier& model, const Batch& batch, int label, ProbeScore probe) {
    return probe == ProbeScore::Probability ? model.mean_probability(batch, label)
                                            : model.prediction_rate(batch, label);
}

BranchDecision branch_select(const Classifier& model, const Batch& batch, const VectorXf& nu_prev, const VectorXf& v,
                             int label, ProbeScore probe) {
    BranchDecision d;
    d.update = v;
    const double vnorm = v.cast<double>().norm();
    if (vnorm == 0.0) return d;
    const VectorXf unit = (v.cast<double>() / vnorm).cast<float>();
    d.score_plus = probe_score(model, nudge_batch(batch, nu_prev + unit), label, probe);
    d.score_minus = probe_score(model, nudge_batch(batch, nu_prev - unit), label, probe);
    d.plus = d.score_plus >= d.score_minus;
    if (!d.plus) d.update = -v;
    return d;
}

SaliencyMap run_mapper(const Classifier& model, const Dataset& data, int label, const MapperConfig& cfg,
                       const SaliencyMap& seed_map, MapperTrace* trace) {
    cfg.validate();
    if (label < 0 || label >= model.num_classes()) throw InputError("run_mapper: concept label out of range");
    if (data.shape != model.input_shape()) throw ConfigError("run_mapper: dataset shape does not match model input");
    if (seed_map.shape != model.input_shape() || seed_map.nu.size() != model.input_shape().size())
        throw ConfigError("run_mapper: seed map shape does not match model input");
    if (seed_map.norm() > double(cfg.eta) + 1e-5)
        throw InputError("run_mapper: seed map norm " + std::to_string(seed_map.norm()) + " exceeds eta");
    if (cfg.iterations > 0 && data.empty()) throw InputError("run_mapper: empty dataset");

    SaliencyMap map = seed_map;
    map.label = label;
    map.eta = cfg.eta;
    if (cfg.iterations == 0) return map;

    BatchSampler sampler(data.size(), std::size_t(cfg.batch_size), mix_seed(cfg.seed, 0x6d6170ull));
    if (sampler.with_replacement()) {
        warn("run_mapper: dataset has " + std::to_string(data.size()) + " samples, fewer than b = " +
             std::to_string(cfg.batch_size) + "; sampling with replacement");
        if (trace) trace->sampled_with_replacement = true;
    }
    MapperState state(map.nu.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        const std::vector<std::size_t> idx = sampler.next();
        const Batch batch = data.gather(idx);
        const VectorXf x = expected_grad(model, nudge_batch(batch, map.nu), label);
        const VectorXf v = moment_direction(state, x, cfg);
        BranchDecision d = branch_select(model, batch, map.nu, v, label, cfg.probe);
        map.nu = project(map.nu + d.update, cfg.eta);
        ++map.iterations;
        if (trace) {
            trace->norms.push_back(map.norm());
            if (!trace->keep_decisions) d.update.resize(0);
            trace->decisions.push_back(std::move(d));
        }
    }
    return map;
}

}  // namespace agnomap::mapper
