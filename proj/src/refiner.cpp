#include "agnomap/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "agnomap/mapper.hpp"
#include "agnomap/micronet/adam.hpp"
#include "agnomap/random.hpp"

namespace agnomap::refiner {

void RefineConfig::validate() const {
    if (!(lambda >= 0.f)) throw ConfigError("refine: lambda must be >= 0");
    if (iterations < 0) throw ConfigError("refine: iterations must be >= 0");
    if (!(lr > 0.f)) throw ConfigError("refine: lr must be positive");
    if (!(eta > 0.f)) throw ConfigError("refine: eta must be positive");
    if (batch_size < 1) throw ConfigError("refine: batch size must be >= 1");
}

VectorXf bilinear_resize(const VectorXf& plane, int height, int width, int out_height, int out_width) {
    if (plane.size() != Eigen::Index(height) * width) throw InputError("bilinear_resize: plane size mismatch");
    VectorXf out(Eigen::Index(out_height) * out_width);
    const double sy = double(height) / out_height, sx = double(width) / out_width;
    for (int y = 0; y < out_height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(height - 1));
        const int y0 = int(fy), y1 = std::min(y0 + 1, height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(width - 1));
            const int x0 = int(fx), x1 = std::min(x0 + 1, width - 1);
            const double wx = fx - x0;
            auto at = [&](int r, int c) { return double(plane[Eigen::Index(r) * width + c]); };
            const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
            const double bottom = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
            out[Eigen::Index(y) * out_width + x] = float(top * (1 - wy) + bottom * wy);
        }
    }
    return out;
}

XiMatrix compute_xi(const Classifier& model, const VectorXf& nu) {
    const Tensor<float> acts = model.conv_base_activations(nu);
    const int h = acts.shape[0], w = acts.shape[1], d = acts.shape[2];
    Eigen::Map<const RowMatrix<float>> a(acts.data.data(), Eigen::Index(h) * w, d);
    const VectorXf plane = a.rowwise().mean();
    const ImageShape& in = model.input_shape();
    VectorXf up = bilinear_resize(plane, h, w, in.height, in.width);
    const float lo = up.minCoeff(), hi = up.maxCoeff();
    if (hi > lo)
        up = ((up.array() - lo) / (hi - lo)).matrix();
    else
        up.setZero();
    XiMatrix xi;
    xi.shape = in;
    xi.source_layer = model.last_conv_index();
    xi.xi.resize(in.size());
    for (Eigen::Index p = 0; p < in.pixels(); ++p) xi.xi.segment(p * in.channels, in.channels).setConstant(up[p]);
    return xi;
}

double objective(const Classifier& model, const Batch& batch, const VectorXf& nu, const XiMatrix& xi, int label,
                 float lambda) {
    const Batch logits = model.forward(mapper::nudge_batch(batch, nu));
    const std::vector<int> labels(std::size_t(batch.rows()), label);
    const double ce = micronet::loss_ce<float>(logits, labels);
    const double penalty =
        (nu.cast<double>().array().abs() * (1.0 - xi.xi.cast<double>().array())).mean();
    return ce + double(lambda) * penalty;
}

VectorXf objective_grad(const Classifier& model, const Batch& batch, const VectorXf& nu, const XiMatrix& xi,
                        int label, float lambda) {
    const Batch shifted = batch.rowwise() - nu.transpose();
    const Batch nudged = shifted.cwiseMax(0.f).cwiseMin(1.f);
    const Batch g = model.input_grad(nudged, label);
    // d clip(I - nu) / d nu = -1 inside (0, 1), 0 where clipped
    Vector<double> sum = Vector<double>::Zero(nu.size());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const auto live = (shifted.row(i).array() > 0.f && shifted.row(i).array() < 1.f);
        sum -= live.select(g.row(i).array(), 0.f).matrix().transpose().cast<double>();
    }
    VectorXf grad = (sum / double(std::max<Eigen::Index>(g.rows(), 1))).cast<float>();
    const float scale = lambda / float(nu.size());
    grad.array() += scale * nu.array().sign() * (1.f - xi.xi.array());
    return grad;
}

double masked_mean_abs(const VectorXf& nu, const XiMatrix& xi, float threshold) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < nu.size(); ++i)
        if (xi.xi[i] < threshold) {
            sum += std::abs(double(nu[i]));
            ++count;
        }
    return count ? sum / double(count) : 0.0;
}

SaliencyMap refine(const Classifier& model, const Dataset& data, const SaliencyMap& map, const RefineConfig& cfg,
                   RefineTrace* trace) {
    cfg.validate();
    if (map.shape != model.input_shape()) throw ConfigError("refine: map shape does not match model input");
    if (data.shape != model.input_shape()) throw ConfigError("refine: dataset shape does not match model input");
    if (cfg.iterations > 0 && data.empty()) throw InputError("refine: empty dataset");

    SaliencyMap out = map;
    out.eta = cfg.eta;
    XiMatrix xi = compute_xi(model, out.nu);
    if (trace) trace->initial_xi = xi;

    micronet::AdamState<float> adam;
    adam.lr = cfg.lr;
    BatchSampler sampler(std::max<std::size_t>(data.size(), 1), std::size_t(cfg.batch_size),
                         mix_seed(cfg.seed, 0x726566696e65ull));
    for (int it = 0; it < cfg.iterations; ++it) {
        if (cfg.recompute_xi && it > 0) xi = compute_xi(model, out.nu);
        const std::vector<std::size_t> idx = sampler.next();
        const Batch batch = data.gather(idx);
        const VectorXf grad = objective_grad(model, batch, out.nu, xi, map.label, cfg.lambda);
        VectorXf* params[] = {&out.nu};
        micronet::adam_step<float>(adam, params, std::span<const VectorXf>(&grad, 1));
        if (trace)
            trace->weighted_l1.push_back(
                (out.nu.cast<double>().array().abs() * (1.0 - xi.xi.cast<double>().array())).sum());
    }
    out.nu = project(out.nu.cwiseMax(-1.f).cwiseMin(1.f), cfg.eta);
    return out;
}

}  // namespace agnomap::refiner
