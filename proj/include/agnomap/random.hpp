#ifndef AGNOMAP_RANDOM_HPP
#define AGNOMAP_RANDOM_HPP

#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace agnomap {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seeded stream with platform-independent draws. std::mt19937_64 output is
/// fixed by the standard; the std distributions are not, so we avoid them.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::size_t index(std::size_t n) {
        // rejection sampling, unbiased
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return std::size_t(x % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
};

/// Epoch-style mini-batch sampler: without replacement inside an epoch,
/// reshuffled from the seeded stream when exhausted. If the pool is smaller
/// than the batch, draws with replacement.
class BatchSampler {
public:
    BatchSampler(std::size_t pool, std::size_t batch, std::uint64_t seed)
        : pool_(pool), batch_(batch), rng_(seed) {}

    [[nodiscard]] bool with_replacement() const { return pool_ < batch_; }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        if (with_replacement()) {
            for (std::size_t i = 0; i < batch_; ++i) out.push_back(rng_.index(pool_));
            return out;
        }
        while (out.size() < batch_) {
            if (cursor_ >= order_.size()) {
                order_ = rng_.permutation(pool_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    std::size_t pool_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace agnomap

#endif  // AGNOMAP_RANDOM_HPP
