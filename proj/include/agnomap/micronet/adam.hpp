#ifndef AGNOMAP_MICRONET_ADAM_HPP
#define AGNOMAP_MICRONET_ADAM_HPP

#include <cmath>
#include <span>
#include <vector>

#include "agnomap/core.hpp"

namespace agnomap::micronet {

/// Adam with bias correction. Moments are lazily sized on the first step.
template <typename Scalar>
struct AdamState {
    Scalar lr = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar epsilon = Scalar(1e-8);
    long step_count = 0;
    std::vector<Vector<Scalar>> mu;
    std::vector<Vector<Scalar>> sigma;
};

/// mu <- b1 mu + (1 - b1) g, sigma <- b2 sigma + (1 - b2) g*g,
/// p -= lr * mu_hat / (sqrt(sigma_hat) + eps).
template <typename Scalar>
void adam_step(AdamState<Scalar>& s, std::span<Vector<Scalar>* const> params,
               std::span<const Vector<Scalar>> grads) {
    if (params.size() != grads.size()) throw InputError("adam_step: parameter/gradient count mismatch");
    if (s.mu.empty()) {
        for (const Vector<Scalar>* p : params) {
            s.mu.push_back(Vector<Scalar>::Zero(p->size()));
            s.sigma.push_back(Vector<Scalar>::Zero(p->size()));
        }
    }
    if (s.mu.size() != params.size()) throw InputError("adam_step: state does not match parameters");
    ++s.step_count;
    const double k = double(s.step_count);
    const Scalar c1 = Scalar(1.0 - std::pow(double(s.beta1), k));
    const Scalar c2 = Scalar(1.0 - std::pow(double(s.beta2), k));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Vector<Scalar>& g = grads[i];
        if (g.size() != params[i]->size()) throw InputError("adam_step: gradient shape mismatch");
        s.mu[i] = s.beta1 * s.mu[i] + (Scalar(1) - s.beta1) * g;
        s.sigma[i] = s.beta2 * s.sigma[i] + (Scalar(1) - s.beta2) * g.cwiseProduct(g);
        params[i]->array() -=
            s.lr * (s.mu[i].array() / c1) / ((s.sigma[i].array() / c2).sqrt() + s.epsilon);
    }
}

template <typename Scalar>
void adam_step(AdamState<Scalar>& s, std::vector<Vector<Scalar>*> params, const std::vector<Vector<Scalar>>& grads) {
    adam_step<Scalar>(s, std::span<Vector<Scalar>* const>(params), std::span<const Vector<Scalar>>(grads));
}

}  // namespace agnomap::micronet

#endif  // AGNOMAP_MICRONET_ADAM_HPP
