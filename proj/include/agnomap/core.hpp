#ifndef AGNOMAP_CORE_HPP
#define AGNOMAP_CORE_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace agnomap {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One sample per row; each row is an image flattened in (h, w, c) order.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXf = Vector<float>;
using Batch = RowMatrix<float>;

/// Invalid configuration: wrong shapes, bad hyper-parameters, missing layers.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid data passed to an otherwise valid configuration.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 0;

    [[nodiscard]] Eigen::Index size() const {
        return Eigen::Index(height) * width * channels;
    }
    [[nodiscard]] Eigen::Index pixels() const { return Eigen::Index(height) * width; }
    bool operator==(const ImageShape&) const = default;
};

/// Non-fatal diagnostics go through this hook; the default prints to stderr.
using WarningHandler = std::function<void(const std::string&)>;
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

inline std::string to_string(const ImageShape& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Dense row-major array with an explicit shape.
template <typename Scalar>
struct Tensor {
    std::vector<int> shape;
    Vector<Scalar> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims)
        : shape(std::move(dims)), data(Vector<Scalar>::Zero(count(shape))) {}
    Tensor(std::vector<int> dims, Vector<Scalar> values) : shape(std::move(dims)), data(std::move(values)) {
        if (count(shape) != data.size())
            throw InputError("tensor shape does not match data length");
    }

    static Eigen::Index count(const std::vector<int>& dims) {
        Eigen::Index n = 1;
        for (int d : dims) n *= d;
        return n;
    }
    [[nodiscard]] bool all_finite() const { return data.allFinite(); }
};

}  // namespace agnomap

#endif  // AGNOMAP_CORE_HPP
