#ifndef AGNOMAP_DATAGEN_HPP
#define AGNOMAP_DATAGEN_HPP

// Procedural image distribution: one geometric label per class, rendered
// anti-aliased over a noisy background, plus visible backdoor triggers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agnomap/core.hpp"
#include "agnomap/dataset.hpp"

namespace agnomap::datagen {

enum class ShapeKind { Circle, Square, Triangle, Cross, Stripes, Ring };

const char* to_string(ShapeKind kind);

struct Range {
    double min = 0.0;
    double max = 0.0;
    bool operator==(const Range&) const = default;
};

/// Rendering recipe for one class. Sizes and offsets are fractions of the
/// image's shorter side; contrast is the per-channel |foreground - background|.
struct ConceptSpec {
    int label = 0;
    ShapeKind kind = ShapeKind::Circle;
    Range radius{0.22, 0.32};
    Range offset{-0.2, 0.2};
    Range rotation{0.0, 6.283185307179586};
    Range background{0.25, 0.75};
    Range contrast{0.35, 0.6};
    bool both_polarities = true;  // shape may be lighter or darker than the background

    void validate() const;
};

/// Circle, square, triangle, cross, stripes, ring (first `num_classes`).
std::vector<ConceptSpec> default_concepts(int num_classes);

inline constexpr ImageShape kDefaultShape{32, 32, 3};
inline constexpr double kNoiseAmplitude = 0.1;

/// Balanced dataset, labels interleaved (sample i has label i % L). Each image
/// draws from its own sub-stream, so the result does not depend on threading.
Dataset generate(std::span<const ConceptSpec> specs, int n_per_class, std::uint64_t seed,
                 ImageShape shape = kDefaultShape);

/// Renders a single image of `spec` from the given stream seed.
VectorXf render(const ConceptSpec& spec, ImageShape shape, std::uint64_t stream_seed);

// ---- triggers ----------------------------------------------------------------

enum class TriggerPattern { Square, Checkerboard, Cross };

const char* to_string(TriggerPattern p);
TriggerPattern trigger_pattern_from_string(const std::string& name);

struct TriggerSpec {
    ImageShape shape;
    VectorXf mask;     // h*w, values in {0, 1}
    VectorXf pattern;  // h*w*c, values in [0, 1]
    int target_label = 0;
    double poison_fraction = 0.1;

    /// Mask is binary, non-empty, a single 4-connected region covering at most 15% of pixels.
    void validate() const;
    [[nodiscard]] int mask_pixels() const { return int(mask.sum()); }
};

enum class Corner { TopLeft, TopRight, BottomLeft, BottomRight };

/// Square `size` x `size` trigger placed flush against `corner`.
TriggerSpec make_trigger(TriggerPattern pattern, ImageShape shape, int target_label, double poison_fraction = 0.1,
                         int size = 8, Corner corner = Corner::BottomRight);

/// Square mask of `size` at (row, col) top-left; used for controls and scoring.
VectorXf square_mask(ImageShape shape, int row, int col, int size);

/// out = img * (1 - mask) + pattern * mask, clipped to [0, 1].
VectorXf apply_trigger(const VectorXf& image, const TriggerSpec& trigger);

/// Applies the trigger to floor(fraction * n) samples chosen by a seeded shuffle
/// and relabels them to the target.
Dataset poison(const Dataset& data, const TriggerSpec& trigger, std::uint64_t seed);

/// Indices that poison() would select.
std::vector<std::size_t> poison_indices(std::size_t n, double fraction, std::uint64_t seed);

// ---- on-disk form ----------------------------------------------------------------

/// Directory of P5/P6 images (00000.ppm, ...) plus labels.tsv (filename TAB label).
void export_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset import_dataset(const std::filesystem::path& dir);

}  // namespace agnomap::datagen

#endif  // AGNOMAP_DATAGEN_HPP
