#ifndef AGNOMAP_DATASET_HPP
#define AGNOMAP_DATASET_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "agnomap/core.hpp"

namespace agnomap {

/// Labelled images with pixels in [0, 1]; row i of `images` is sample i.
struct Dataset {
    ImageShape shape;
    Batch images;
    std::vector<int> labels;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] bool empty() const { return labels.empty(); }

    [[nodiscard]] Batch gather(std::span<const std::size_t> rows) const {
        Batch out(Eigen::Index(rows.size()), images.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = images.row(Eigen::Index(rows[i]));
        return out;
    }
    [[nodiscard]] std::vector<int> gather_labels(std::span<const std::size_t> rows) const {
        std::vector<int> out;
        out.reserve(rows.size());
        for (std::size_t r : rows) out.push_back(labels[r]);
        return out;
    }

    /// Rows [first, first + count).
    [[nodiscard]] Dataset slice(std::size_t first, std::size_t count) const {
        Dataset d{shape, images.middleRows(Eigen::Index(first), Eigen::Index(count)),
                  std::vector<int>(labels.begin() + std::ptrdiff_t(first),
                                   labels.begin() + std::ptrdiff_t(first + count)),
                  seed};
        return d;
    }

    /// Throws InputError on a size mismatch, a wrong row width, or a pixel outside [0, 1].
    void validate() const {
        if (Eigen::Index(labels.size()) != images.rows()) throw InputError("dataset: image/label count mismatch");
        if (images.cols() != shape.size()) throw InputError("dataset: row width does not match image shape");
        if (images.size() > 0 && (images.minCoeff() < 0.f || images.maxCoeff() > 1.f))
            throw InputError("dataset: pixel outside [0, 1]");
    }
};

}  // namespace agnomap

#endif  // AGNOMAP_DATASET_HPP
