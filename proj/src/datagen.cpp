#include "agnomap/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "agnomap/parallel.hpp"
#include "agnomap/pnm.hpp"
#include "agnomap/random.hpp"

namespace agnomap::datagen {

const char* to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
        case ShapeKind::Cross: return "cross";
        case ShapeKind::Stripes: return "stripes";
        case ShapeKind::Ring: return "ring";
    }
    return "?";
}

void ConceptSpec::validate() const {
    auto check = [](const Range& r, const char* name) {
        if (!(r.min <= r.max)) throw ConfigError(std::string("concept spec: range '") + name + "' has min > max");
    };
    check(radius, "radius");
    check(offset, "offset");
    check(rotation, "rotation");
    check(background, "background");
    check(contrast, "contrast");
    if (radius.min <= 0.0) throw ConfigError("concept spec: radius must be positive");
    if (background.min < 0.0 || background.max > 1.0) throw ConfigError("concept spec: background outside [0, 1]");
    if (contrast.min < 0.0) throw ConfigError("concept spec: negative contrast");
}

std::vector<ConceptSpec> default_concepts(int num_classes) {
    static constexpr ShapeKind kinds[] = {ShapeKind::Circle,  ShapeKind::Square,  ShapeKind::Triangle,
                                          ShapeKind::Cross,   ShapeKind::Stripes, ShapeKind::Ring};
    if (num_classes < 2 || num_classes > int(std::size(kinds)))
        throw ConfigError("default_concepts: class count must be in [2, 6]");
    std::vector<ConceptSpec> out;
    for (int i = 0; i < num_classes; ++i) {
        ConceptSpec s;
        s.label = i;
        s.kind = kinds[i];
        out.push_back(s);
    }
    return out;
}

namespace {

// Shape membership in the shape's own frame, unit radius.
bool inside(ShapeKind kind, double u, double v) {
    switch (kind) {
        case ShapeKind::Circle:
            return u * u + v * v <= 1.0;
        case ShapeKind::Square:
            return std::max(std::abs(u), std::abs(v)) <= 0.8;
        case ShapeKind::Triangle: {
            // Equilateral, inscribed in the unit circle, apex at v = -1.
            static constexpr double s3 = 1.7320508075688772;
            return v <= 0.5 && s3 * u - v <= 1.0 && -s3 * u - v <= 1.0;
        }
        case ShapeKind::Cross:
            return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
        case ShapeKind::Stripes: {
            if (std::max(std::abs(u), std::abs(v)) > 0.9) return false;
            const int band = int(std::floor((u + 0.9) / 0.36));
            return band % 2 == 0;
        }
        case ShapeKind::Ring: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.36;
        }
    }
    return false;
}

constexpr int kSuper = 4;  // supersamples per axis

}  // namespace

VectorXf render(const ConceptSpec& spec, ImageShape shape, std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    const double side = std::min(shape.height, shape.width);
    const double radius = rng.uniform(spec.radius.min, spec.radius.max) * side;
    const double cx = 0.5 * shape.width + rng.uniform(spec.offset.min, spec.offset.max) * side;
    const double cy = 0.5 * shape.height + rng.uniform(spec.offset.min, spec.offset.max) * side;
    const double theta = rng.uniform(spec.rotation.min, spec.rotation.max);
    const double bg = rng.uniform(spec.background.min, spec.background.max);
    const double sign = (spec.both_polarities && rng.uniform() < 0.5) ? -1.0 : 1.0;
    std::vector<double> fg(std::size_t(shape.channels));
    for (auto& f : fg) f = std::clamp(bg + sign * rng.uniform(spec.contrast.min, spec.contrast.max), 0.0, 1.0);

    const double ct = std::cos(theta), st = std::sin(theta);
    VectorXf img(shape.size());
    for (int y = 0; y < shape.height; ++y)
        for (int x = 0; x < shape.width; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = x + (sx + 0.5) / kSuper - cx;
                    const double py = y + (sy + 0.5) / kSuper - cy;
                    const double u = (ct * px + st * py) / radius;
                    const double v = (-st * px + ct * py) / radius;
                    hits += inside(spec.kind, u, v);
                }
            const double cover = double(hits) / (kSuper * kSuper);
            for (int c = 0; c < shape.channels; ++c) {
                const double noisy = bg + rng.uniform(-kNoiseAmplitude, kNoiseAmplitude);
                const double value = noisy * (1.0 - cover) + fg[std::size_t(c)] * cover;
                img[(Eigen::Index(y) * shape.width + x) * shape.channels + c] = float(std::clamp(value, 0.0, 1.0));
            }
        }
    return img;
}

Dataset generate(std::span<const ConceptSpec> specs, int n_per_class, std::uint64_t seed, ImageShape shape) {
    if (specs.size() < 2) throw ConfigError("generate: need at least two concepts");
    if (n_per_class < 1) throw ConfigError("generate: n_per_class must be >= 1");
    if (shape.height < 4 || shape.width < 4 || shape.channels < 1) throw ConfigError("generate: image too small");
    const int L = int(specs.size());
    std::vector<const ConceptSpec*> by_label(std::size_t(L), nullptr);
    for (const auto& s : specs) {
        s.validate();
        if (s.label < 0 || s.label >= L) throw ConfigError("generate: concept label outside [0, L)");
        if (by_label[std::size_t(s.label)]) throw ConfigError("generate: duplicate concept label");
        by_label[std::size_t(s.label)] = &s;
    }
    for (int a = 0; a < L; ++a)
        for (int b = a + 1; b < L; ++b) {
            const ConceptSpec& x = *by_label[std::size_t(a)];
            const ConceptSpec& y = *by_label[std::size_t(b)];
            if (x.kind == y.kind && x.radius == y.radius && x.offset == y.offset && x.rotation == y.rotation)
                warn("generate: concepts " + std::to_string(a) + " and " + std::to_string(b) +
                     " render identically; classes will be indistinguishable");
        }

    const std::size_t n = std::size_t(L) * std::size_t(n_per_class);
    Dataset d;
    d.shape = shape;
    d.seed = seed;
    d.images.resize(Eigen::Index(n), shape.size());
    d.labels.resize(n);
    parallel_for(n, [&](std::size_t i) {
        const int label = int(i % std::size_t(L));
        d.labels[i] = label;
        d.images.row(Eigen::Index(i)) = render(*by_label[std::size_t(label)], shape, mix_seed(seed, i)).transpose();
    });
    return d;
}

// ---- triggers ----------------------------------------------------------------

const char* to_string(TriggerPattern p) {
    switch (p) {
        case TriggerPattern::Square: return "square";
        case TriggerPattern::Checkerboard: return "checkerboard";
        case TriggerPattern::Cross: return "cross";
    }
    return "?";
}

TriggerPattern trigger_pattern_from_string(const std::string& name) {
    if (name == "square") return TriggerPattern::Square;
    if (name == "checkerboard") return TriggerPattern::Checkerboard;
    if (name == "cross") return TriggerPattern::Cross;
    throw ConfigError("unknown trigger pattern '" + name + "' (square, checkerboard, cross)");
}

void TriggerSpec::validate() const {
    if (mask.size() != shape.pixels()) throw ConfigError("trigger: mask size does not match image");
    if (pattern.size() != shape.size()) throw ConfigError("trigger: pattern size does not match image");
    if (!(poison_fraction > 0.0 && poison_fraction <= 1.0)) throw ConfigError("trigger: poison_fraction must be in (0, 1]");
    if (target_label < 0) throw ConfigError("trigger: negative target label");
    if (pattern.size() > 0 && (pattern.minCoeff() < 0.f || pattern.maxCoeff() > 1.f))
        throw ConfigError("trigger: pattern outside [0, 1]");
    int count = 0;
    Eigen::Index first = -1;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0.f && mask[i] != 1.f) throw ConfigError("trigger: mask must be binary");
        if (mask[i] == 1.f) {
            ++count;
            if (first < 0) first = i;
        }
    }
    if (count == 0) throw ConfigError("trigger: empty mask");
    if (double(count) > 0.15 * double(shape.pixels())) throw ConfigError("trigger: mask covers more than 15% of pixels");
    // flood fill from the first masked pixel must reach all of them
    std::vector<char> seen(std::size_t(mask.size()), 0);
    std::vector<Eigen::Index> stack{first};
    seen[std::size_t(first)] = 1;
    int reached = 0;
    while (!stack.empty()) {
        const Eigen::Index p = stack.back();
        stack.pop_back();
        ++reached;
        const int y = int(p / shape.width), x = int(p % shape.width);
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& q : nb) {
            if (q[0] < 0 || q[0] >= shape.height || q[1] < 0 || q[1] >= shape.width) continue;
            const Eigen::Index j = Eigen::Index(q[0]) * shape.width + q[1];
            if (mask[j] == 1.f && !seen[std::size_t(j)]) {
                seen[std::size_t(j)] = 1;
                stack.push_back(j);
            }
        }
    }
    if (reached != count) throw ConfigError("trigger: mask is not a single contiguous region");
}

VectorXf square_mask(ImageShape shape, int row, int col, int size) {
    if (size <= 0 || row < 0 || col < 0 || row + size > shape.height || col + size > shape.width)
        throw ConfigError("square_mask: region outside the image");
    VectorXf m = VectorXf::Zero(shape.pixels());
    for (int y = row; y < row + size; ++y)
        for (int x = col; x < col + size; ++x) m[Eigen::Index(y) * shape.width + x] = 1.f;
    return m;
}

TriggerSpec make_trigger(TriggerPattern pattern, ImageShape shape, int target_label, double poison_fraction, int size,
                         Corner corner) {
    const bool bottom = corner == Corner::BottomLeft || corner == Corner::BottomRight;
    const bool right = corner == Corner::TopRight || corner == Corner::BottomRight;
    const int row0 = bottom ? shape.height - size : 0;
    const int col0 = right ? shape.width - size : 0;
    TriggerSpec t;
    t.shape = shape;
    t.mask = square_mask(shape, row0, col0, size);
    t.pattern = VectorXf::Zero(shape.size());
    t.target_label = target_label;
    t.poison_fraction = poison_fraction;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const Eigen::Index base = (Eigen::Index(row0 + y) * shape.width + col0 + x) * shape.channels;
            for (int c = 0; c < shape.channels; ++c) {
                float v = 0.f;
                switch (pattern) {
                    case TriggerPattern::Square:  // solid yellow (solid white for gray images)
                        v = (shape.channels == 3 && c == 2) ? 0.f : 1.f;
                        break;
                    case TriggerPattern::Checkerboard:
                        v = ((y / 2 + x / 2) % 2 == 0) ? 1.f : 0.f;
                        break;
                    case TriggerPattern::Cross:  // white plus on black
                        v = (std::abs(2 * y + 1 - size) <= 2 || std::abs(2 * x + 1 - size) <= 2) ? 1.f : 0.f;
                        break;
                }
                t.pattern[base + c] = v;
            }
        }
    t.validate();
    return t;
}

VectorXf apply_trigger(const VectorXf& image, const TriggerSpec& trigger) {
    if (image.size() != trigger.shape.size()) throw InputError("apply_trigger: image shape does not match trigger");
    VectorXf out = image;
    const int c = trigger.shape.channels;
    for (Eigen::Index p = 0; p < trigger.mask.size(); ++p) {
        const float m = trigger.mask[p];
        for (int ch = 0; ch < c; ++ch) {
            const Eigen::Index i = p * c + ch;
            out[i] = std::clamp(image[i] * (1.f - m) + trigger.pattern[i] * m, 0.f, 1.f);
        }
    }
    return out;
}

std::vector<std::size_t> poison_indices(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("poison: fraction must be in (0, 1]");
    Rng rng(mix_seed(seed, 0x706f69736f6eull));
    std::vector<std::size_t> order = rng.permutation(n);
    order.resize(std::size_t(std::floor(fraction * double(n))));
    return order;
}

Dataset poison(const Dataset& data, const TriggerSpec& trigger, std::uint64_t seed) {
    trigger.validate();
    if (trigger.shape != data.shape) throw InputError("poison: trigger shape does not match dataset");
    Dataset out = data;
    for (std::size_t i : poison_indices(data.size(), trigger.poison_fraction, seed)) {
        out.images.row(Eigen::Index(i)) = apply_trigger(data.images.row(Eigen::Index(i)).transpose(), trigger).transpose();
        out.labels[i] = trigger.target_label;
    }
    return out;
}

// ---- on-disk form ----------------------------------------------------------------

void export_dataset(const Dataset& data, const std::filesystem::path& dir) {
    data.validate();
    std::filesystem::create_directories(dir);
    const char* ext = data.shape.channels == 1 ? ".pgm" : ".ppm";
    std::ofstream tsv(dir / "labels.tsv");
    if (!tsv) throw std::runtime_error("export_dataset: cannot write " + (dir / "labels.tsv").string());
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu%s", i, ext);
        pnm::write(dir / name, data.images.row(Eigen::Index(i)).transpose(), data.shape);
        tsv << name << '\t' << data.labels[i] << '\n';
    }
}

Dataset import_dataset(const std::filesystem::path& dir) {
    std::ifstream tsv(dir / "labels.tsv");
    if (!tsv) throw InputError("import_dataset: missing " + (dir / "labels.tsv").string());
    std::vector<std::pair<std::string, int>> rows;
    std::string line;
    while (std::getline(tsv, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw InputError("import_dataset: labels.tsv line without TAB: " + line);
        try {
            rows.emplace_back(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
        } catch (const std::logic_error&) {
            throw InputError("import_dataset: bad label in line: " + line);
        }
    }
    if (rows.empty()) throw InputError("import_dataset: no samples in " + dir.string());
    Dataset d;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ImageShape s;
        VectorXf px = pnm::read(dir / rows[i].first, s);
        if (i == 0) {
            d.shape = s;
            d.images.resize(Eigen::Index(rows.size()), s.size());
        } else if (s != d.shape) {
            throw InputError("import_dataset: mixed image shapes in " + dir.string());
        }
        d.images.row(Eigen::Index(i)) = px.transpose();
        d.labels.push_back(rows[i].second);
    }
    return d;
}

}  // namespace agnomap::datagen
