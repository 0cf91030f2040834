#ifndef AGNOMAP_MICRONET_NETWORK_HPP
#define AGNOMAP_MICRONET_NETWORK_HPP

// Small differentiable classifier: a fixed menu of layers (Conv2d, ReLU,
// MaxPool2d, Flatten, Dense) with forward passes, cross-entropy, parameter
// gradients and input gradients. Templated on the scalar so the same code
// runs in float (production) and double (reference checks).
//
// Activations are stored per sample as flat vectors in (h, w, c) order. A
// batch is a RowMatrix with one sample per row.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agnomap/core.hpp"
#include "agnomap/parallel.hpp"
#include "agnomap/random.hpp"

namespace agnomap::micronet {

enum class LayerKind : std::uint32_t { Conv2d = 1, ReLU = 2, MaxPool2d = 3, Flatten = 4, Dense = 5 };
enum class Padding : std::uint32_t { Same = 0, Valid = 1 };

const char* to_string(LayerKind kind);

/// Architecture entry. `units` is output channels for Conv2d and outputs for Dense.
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int units = 0;
    int kernel = 0;
    Padding padding = Padding::Same;

    static LayerSpec conv(int channels, int kernel = 3, Padding pad = Padding::Same) {
        return {LayerKind::Conv2d, channels, kernel, pad};
    }
    static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, Padding::Same}; }
    static LayerSpec maxpool() { return {LayerKind::MaxPool2d, 0, 0, Padding::Same}; }
    static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, Padding::Same}; }
    static LayerSpec dense(int units) { return {LayerKind::Dense, units, 0, Padding::Same}; }
};

template <typename Scalar>
struct Layer {
    LayerKind kind = LayerKind::ReLU;
    ImageShape in;
    ImageShape out;
    int kernel = 0;
    Padding padding = Padding::Same;
    // Conv2d: (k*k*c_in) x c_out, rows ordered (dy, dx, c_in). Dense: n_in x n_out.
    // Both stored row-major.
    Vector<Scalar> weight;
    Vector<Scalar> bias;

    [[nodiscard]] bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Dense; }
    [[nodiscard]] Eigen::Index fan_in() const {
        return kind == LayerKind::Conv2d ? Eigen::Index(kernel) * kernel * in.channels : in.size();
    }
    [[nodiscard]] Eigen::Index fan_out() const {
        return kind == LayerKind::Conv2d ? out.channels : out.size();
    }
    [[nodiscard]] int pad() const { return padding == Padding::Same ? kernel / 2 : 0; }
};

/// Per-parameter-block gradients, in Network::parameters() order.
template <typename Scalar>
using Gradients = std::vector<Vector<Scalar>>;

/// Cross-entropy averaged over the batch, accumulated in double.
template <typename Scalar>
double loss_ce(const RowMatrix<Scalar>& logits, std::span<const int> labels) {
    if (Eigen::Index(labels.size()) != logits.rows())
        throw InputError("loss_ce: label count does not match batch size");
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int y = labels[std::size_t(i)];
        if (y < 0 || y >= logits.cols()) throw InputError("loss_ce: label out of range");
        const double m = double(logits.row(i).maxCoeff());
        double z = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(double(logits(i, j)) - m);
        total += m + std::log(z) - double(logits(i, y));
    }
    return logits.rows() > 0 ? total / double(logits.rows()) : 0.0;
}

template <typename Scalar>
RowMatrix<Scalar> softmax(const RowMatrix<Scalar>& logits) {
    RowMatrix<Scalar> p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const Scalar m = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

template <typename Scalar>
class Network {
public:
    using Mat = RowMatrix<Scalar>;
    using Vec = Vector<Scalar>;

    Network() = default;

    /// Builds the layer stack and checks shape compatibility. Parameters are zero
    /// until init() or explicit assignment.
    Network(ImageShape input, std::span<const LayerSpec> specs) : input_(input) {
        if (input.height <= 0 || input.width <= 0 || input.channels <= 0)
            throw ConfigError("network: input shape must be positive");
        ImageShape cur = input;
        for (const LayerSpec& s : specs) {
            Layer<Scalar> l;
            l.kind = s.kind;
            l.in = cur;
            switch (s.kind) {
                case LayerKind::Conv2d: {
                    if (s.units <= 0 || s.kernel <= 0) throw ConfigError("network: bad Conv2d spec");
                    if (s.padding == Padding::Same && s.kernel % 2 == 0)
                        throw ConfigError("network: 'same' padding needs an odd kernel");
                    l.kernel = s.kernel;
                    l.padding = s.padding;
                    const int shrink = s.padding == Padding::Same ? 0 : s.kernel - 1;
                    l.out = {cur.height - shrink, cur.width - shrink, s.units};
                    if (l.out.height <= 0 || l.out.width <= 0)
                        throw ConfigError("network: Conv2d kernel larger than its input");
                    l.weight = Vec::Zero(l.fan_in() * s.units);
                    l.bias = Vec::Zero(s.units);
                    break;
                }
                case LayerKind::ReLU:
                    l.out = cur;
                    break;
                case LayerKind::MaxPool2d:
                    l.out = {cur.height / 2, cur.width / 2, cur.channels};
                    if (l.out.height == 0 || l.out.width == 0)
                        throw ConfigError("network: MaxPool2d input smaller than 2x2");
                    break;
                case LayerKind::Flatten:
                    l.out = {1, 1, int(cur.size())};
                    break;
                case LayerKind::Dense:
                    if (s.units <= 0) throw ConfigError("network: bad Dense spec");
                    if (cur.height != 1 || cur.width != 1)
                        throw ConfigError("network: Dense needs a flattened input");
                    l.out = {1, 1, s.units};
                    l.weight = Vec::Zero(cur.size() * s.units);
                    l.bias = Vec::Zero(s.units);
                    break;
                default:
                    throw ConfigError("network: unknown layer kind");
            }
            cur = l.out;
            layers_.push_back(std::move(l));
        }
        if (layers_.empty()) throw ConfigError("network: no layers");
        if (cur.height != 1 || cur.width != 1 || cur.channels < 2)
            throw ConfigError("network: final layer must produce a vector of >= 2 logits");
    }

    /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers_) {
            if (!l.has_params()) continue;
            const double limit = std::sqrt(6.0 / double(l.fan_in()));
            for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight[i] = Scalar(rng.uniform(-limit, limit));
            l.bias.setZero();
        }
    }

    [[nodiscard]] const ImageShape& input_shape() const { return input_; }
    [[nodiscard]] int num_classes() const { return layers_.back().out.channels; }
    [[nodiscard]] const std::vector<Layer<Scalar>>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Layer<Scalar>>& layers() { return layers_; }

    /// Parameter blocks: weight then bias for every parametric layer.
    std::vector<Vec*> parameters() {
        std::vector<Vec*> out;
        for (auto& l : layers_)
            if (l.has_params()) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        return out;
    }
    std::vector<const Vec*> parameters() const {
        std::vector<const Vec*> out;
        for (const auto& l : layers_)
            if (l.has_params()) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        return out;
    }

    [[nodiscard]] Gradients<Scalar> zero_gradients() const {
        Gradients<Scalar> g;
        for (const Vec* p : parameters()) g.push_back(Vec::Zero(p->size()));
        return g;
    }

    template <typename Other>
    [[nodiscard]] Network<Other> cast() const {
        Network<Other> n;
        n.input_ = input_;
        for (const auto& l : layers_) {
            Layer<Other> o;
            o.kind = l.kind;
            o.in = l.in;
            o.out = l.out;
            o.kernel = l.kernel;
            o.padding = l.padding;
            o.weight = l.weight.template cast<Other>();
            o.bias = l.bias.template cast<Other>();
            n.layers_.push_back(std::move(o));
        }
        return n;
    }

    // ---- batch API ---------------------------------------------------------

    Mat forward(const Mat& batch) const {
        check_batch(batch);
        Mat logits(batch.rows(), num_classes());
        parallel_for(std::size_t(batch.rows()), [&](std::size_t i) {
            Trace t;
            forward_sample(batch.row(Eigen::Index(i)), t);
            logits.row(Eigen::Index(i)) = t.acts.back().transpose();
        });
        return logits;
    }

    Mat probabilities(const Mat& batch) const { return softmax<Scalar>(forward(batch)); }

    /// Mean softmax probability of `label` over the batch.
    double mean_probability(const Mat& batch, int label) const {
        check_label(label);
        const Mat p = probabilities(batch);
        double s = 0.0;
        for (Eigen::Index i = 0; i < p.rows(); ++i) s += double(p(i, label));
        return p.rows() > 0 ? s / double(p.rows()) : 0.0;
    }

    /// Fraction of the batch whose argmax is `label`.
    double prediction_rate(const Mat& batch, int label) const {
        check_label(label);
        const Mat logits = forward(batch);
        Eigen::Index hits = 0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index arg;
            logits.row(i).maxCoeff(&arg);
            hits += arg == label;
        }
        return logits.rows() > 0 ? double(hits) / double(logits.rows()) : 0.0;
    }

    /// Per-sample gradient of the sample's own cross-entropy w.r.t. its pixels.
    Mat input_grad(const Mat& batch, int label) const {
        check_batch(batch);
        check_label(label);
        Mat grads(batch.rows(), batch.cols());
        parallel_for(std::size_t(batch.rows()), [&](std::size_t i) {
            Trace t;
            forward_sample(batch.row(Eigen::Index(i)), t);
            Vec g = logit_grad(t.acts.back(), label);
            backward_sample(t, g, nullptr, Scalar(1));
            grads.row(Eigen::Index(i)) = g.transpose();
        });
        return grads;
    }

    /// Mean cross-entropy over the batch and its gradient w.r.t. every parameter.
    /// The reduction runs over fixed-size chunks in index order, so results do not
    /// depend on the thread count.
    double param_grad(const Mat& batch, std::span<const int> labels, Gradients<Scalar>& grads) const {
        check_batch(batch);
        if (Eigen::Index(labels.size()) != batch.rows())
            throw InputError("param_grad: label count does not match batch size");
        for (int y : labels) check_label(y);
        constexpr Eigen::Index chunk = 8;
        const Eigen::Index n = batch.rows();
        const std::size_t chunks = std::size_t((n + chunk - 1) / chunk);
        std::vector<Gradients<Scalar>> partial(chunks);
        std::vector<double> partial_loss(chunks, 0.0);
        const Scalar scale = Scalar(1) / Scalar(std::max<Eigen::Index>(n, 1));
        parallel_for(chunks, [&](std::size_t c) {
            partial[c] = zero_gradients();
            for (Eigen::Index i = Eigen::Index(c) * chunk; i < std::min(n, Eigen::Index(c + 1) * chunk); ++i) {
                Trace t;
                forward_sample(batch.row(i), t);
                const int y = labels[std::size_t(i)];
                partial_loss[c] += sample_loss(t.acts.back(), y);
                Vec g = logit_grad(t.acts.back(), y);
                backward_sample(t, g, &partial[c], scale);
            }
        });
        grads = zero_gradients();
        double loss = 0.0;
        for (std::size_t c = 0; c < chunks; ++c) {
            for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += partial[c][p];
            loss += partial_loss[c];
        }
        return n > 0 ? loss / double(n) : 0.0;
    }

    /// Output of every layer for one image: result[0] is the input, result[i + 1] the output of layer i.
    std::vector<Vec> activations(const Vec& image) const {
        if (image.size() != input_.size()) throw InputError("activations: input shape mismatch");
        Trace t;
        forward_sample(image.transpose(), t);
        return t.acts;
    }

    /// Index of the last Conv2d layer, or -1.
    [[nodiscard]] int last_conv_index() const {
        for (int i = int(layers_.size()) - 1; i >= 0; --i)
            if (layers_[std::size_t(i)].kind == LayerKind::Conv2d) return i;
        return -1;
    }

    /// Activations of the last conv layer, taken after its ReLU when one follows.
    Tensor<Scalar> conv_base_activations(const Vec& image) const {
        const int conv = last_conv_index();
        if (conv < 0) throw ConfigError("conv_base_activations: model has no Conv2d layer");
        if (image.size() != input_.size()) throw ConfigError("conv_base_activations: input shape mismatch");
        Trace t;
        forward_sample(image.transpose(), t);
        std::size_t pick = std::size_t(conv) + 1;  // acts[i + 1] is the output of layer i
        if (std::size_t(conv) + 1 < layers_.size() && layers_[std::size_t(conv) + 1].kind == LayerKind::ReLU)
            pick += 1;
        const ImageShape& s = layers_[pick - 1].out;
        return Tensor<Scalar>({s.height, s.width, s.channels}, t.acts[pick]);
    }

private:
    template <typename>
    friend class Network;

    struct Trace {
        std::vector<Vec> acts;     // acts[0] = input, acts[i + 1] = output of layer i
        std::vector<Mat> patches;  // im2col matrices for conv layers, empty otherwise
    };

    void check_batch(const Mat& batch) const {
        if (batch.cols() != input_.size())
            throw InputError("network: batch width " + std::to_string(batch.cols()) +
                              " does not match input shape " + to_string(input_));
    }
    void check_label(int label) const {
        if (label < 0 || label >= num_classes()) throw InputError("network: label out of range");
    }

    static double sample_loss(const Vec& logits, int y) {
        const double m = double(logits.maxCoeff());
        double z = 0.0;
        for (Eigen::Index j = 0; j < logits.size(); ++j) z += std::exp(double(logits[j]) - m);
        return m + std::log(z) - double(logits[y]);
    }

    // d(-log softmax_y)/d logits = softmax - onehot(y)
    static Vec logit_grad(const Vec& logits, int y) {
        Vec p = (logits.array() - logits.maxCoeff()).exp();
        p /= p.sum();
        p[y] -= Scalar(1);
        return p;
    }

    template <typename Row>
    void forward_sample(const Row& input, Trace& t) const {
        t.acts.resize(layers_.size() + 1);
        t.patches.resize(layers_.size());
        t.acts[0] = input.transpose();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Layer<Scalar>& l = layers_[i];
            const Vec& x = t.acts[i];
            Vec& y = t.acts[i + 1];
            switch (l.kind) {
                case LayerKind::Conv2d: {
                    im2col(l, x, t.patches[i]);
                    y.resize(l.out.size());
                    Eigen::Map<Mat> out(y.data(), l.out.pixels(), l.out.channels);
                    Eigen::Map<const Mat> w(l.weight.data(), l.fan_in(), l.out.channels);
                    out.noalias() = t.patches[i] * w;
                    out.rowwise() += l.bias.transpose();
                    break;
                }
                case LayerKind::ReLU:
                    y = x.cwiseMax(Scalar(0));
                    break;
                case LayerKind::MaxPool2d: {
                    y.resize(l.out.size());
                    const int c = l.in.channels;
                    for (int oy = 0; oy < l.out.height; ++oy)
                        for (int ox = 0; ox < l.out.width; ++ox)
                            for (int ch = 0; ch < c; ++ch)
                                y[(Eigen::Index(oy) * l.out.width + ox) * c + ch] = x[pool_argmax(l, x, oy, ox, ch)];
                    break;
                }
                case LayerKind::Flatten:
                    y = x;
                    break;
                case LayerKind::Dense: {
                    Eigen::Map<const Mat> w(l.weight.data(), l.in.size(), l.out.size());
                    y.noalias() = w.transpose() * x;
                    y += l.bias;
                    break;
                }
            }
        }
    }

    // On entry g holds dL/d logits; on exit dL/d input. Parameter gradients, when
    // requested, are accumulated into grads scaled by `scale`.
    void backward_sample(const Trace& t, Vec& g, Gradients<Scalar>* grads, Scalar scale) const {
        std::size_t block = 0;
        if (grads)
            for (const auto& l : layers_) block += l.has_params() ? 2 : 0;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const Layer<Scalar>& l = layers_[i];
            const Vec& x = t.acts[i];
            switch (l.kind) {
                case LayerKind::Conv2d: {
                    Eigen::Map<const Mat> gout(g.data(), l.out.pixels(), l.out.channels);
                    Eigen::Map<const Mat> w(l.weight.data(), l.fan_in(), l.out.channels);
                    if (grads) {
                        block -= 2;
                        Eigen::Map<Mat> gw((*grads)[block].data(), l.fan_in(), l.out.channels);
                        gw.noalias() += scale * (t.patches[i].transpose() * gout);
                        (*grads)[block + 1] += scale * gout.colwise().sum().transpose();
                    }
                    const Mat gpatch = gout * w.transpose();
                    Vec gin = Vec::Zero(l.in.size());
                    col2im(l, gpatch, gin);
                    g = std::move(gin);
                    break;
                }
                case LayerKind::ReLU:
                    g = (x.array() > Scalar(0)).select(g, Scalar(0));
                    break;
                case LayerKind::MaxPool2d: {
                    Vec gin = Vec::Zero(l.in.size());
                    const int c = l.in.channels;
                    for (int oy = 0; oy < l.out.height; ++oy)
                        for (int ox = 0; ox < l.out.width; ++ox)
                            for (int ch = 0; ch < c; ++ch)
                                gin[pool_argmax(l, x, oy, ox, ch)] += g[(Eigen::Index(oy) * l.out.width + ox) * c + ch];
                    g = std::move(gin);
                    break;
                }
                case LayerKind::Flatten:
                    break;
                case LayerKind::Dense: {
                    Eigen::Map<const Mat> w(l.weight.data(), l.in.size(), l.out.size());
                    if (grads) {
                        block -= 2;
                        Eigen::Map<Mat> gw((*grads)[block].data(), l.in.size(), l.out.size());
                        gw.noalias() += scale * (x * g.transpose());
                        (*grads)[block + 1] += scale * g;
                    }
                    Vec gin = w * g;
                    g = std::move(gin);
                    break;
                }
            }
        }
    }

    // Flat index into x of the max of the 2x2 window; first max wins ties.
    static Eigen::Index pool_argmax(const Layer<Scalar>& l, const Vec& x, int oy, int ox, int ch) {
        const int c = l.in.channels;
        Eigen::Index best = (Eigen::Index(2 * oy) * l.in.width + 2 * ox) * c + ch;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const Eigen::Index idx = (Eigen::Index(2 * oy + dy) * l.in.width + 2 * ox + dx) * c + ch;
                if (x[idx] > x[best]) best = idx;
            }
        return best;
    }

    static void im2col(const Layer<Scalar>& l, const Vec& x, Mat& patches) {
        const int k = l.kernel, pad = l.pad(), cin = l.in.channels;
        patches.setZero(l.out.pixels(), l.fan_in());
        for (int oy = 0; oy < l.out.height; ++oy)
            for (int ox = 0; ox < l.out.width; ++ox) {
                Scalar* row = patches.data() + (Eigen::Index(oy) * l.out.width + ox) * patches.cols();
                for (int dy = 0; dy < k; ++dy) {
                    const int iy = oy + dy - pad;
                    if (iy < 0 || iy >= l.in.height) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        const int ix = ox + dx - pad;
                        if (ix < 0 || ix >= l.in.width) continue;
                        const Scalar* src = x.data() + (Eigen::Index(iy) * l.in.width + ix) * cin;
                        std::copy(src, src + cin, row + (dy * k + dx) * cin);
                    }
                }
            }
    }

    static void col2im(const Layer<Scalar>& l, const Mat& gpatch, Vec& gin) {
        const int k = l.kernel, pad = l.pad(), cin = l.in.channels;
        for (int oy = 0; oy < l.out.height; ++oy)
            for (int ox = 0; ox < l.out.width; ++ox) {
                const Scalar* row = gpatch.data() + (Eigen::Index(oy) * l.out.width + ox) * gpatch.cols();
                for (int dy = 0; dy < k; ++dy) {
                    const int iy = oy + dy - pad;
                    if (iy < 0 || iy >= l.in.height) continue;
                    for (int dx = 0; dx < k; ++dx) {
                        const int ix = ox + dx - pad;
                        if (ix < 0 || ix >= l.in.width) continue;
                        Scalar* dst = gin.data() + (Eigen::Index(iy) * l.in.width + ix) * cin;
                        const Scalar* src = row + (dy * k + dx) * cin;
                        for (int ch = 0; ch < cin; ++ch) dst[ch] += src[ch];
                    }
                }
            }
    }

    ImageShape input_;
    std::vector<Layer<Scalar>> layers_;
};

using Classifier = Network<float>;

/// Three conv blocks and a linear head; the reference architecture for the
/// synthetic-label experiments.
inline std::vector<LayerSpec> default_architecture(int num_classes, int width = 8) {
    return {LayerSpec::conv(width),     LayerSpec::relu(), LayerSpec::maxpool(),
            LayerSpec::conv(2 * width), LayerSpec::relu(), LayerSpec::maxpool(),
            LayerSpec::conv(4 * width), LayerSpec::relu(), LayerSpec::maxpool(),
            LayerSpec::flatten(),       LayerSpec::dense(num_classes)};
}

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool2d: return "MaxPool2d";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Dense: return "Dense";
    }
    return "?";
}

}  // namespace agnomap::micronet

#endif  // AGNOMAP_MICRONET_NETWORK_HPP
