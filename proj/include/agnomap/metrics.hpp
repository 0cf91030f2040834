#ifndef AGNOMAP_METRICS_HPP
#define AGNOMAP_METRICS_HPP

// Model-score: exp(E_i[ KL(P_cond_i || P_marg) ]) / L, where P_cond_i is the
// target model's class distribution for map i and P_marg their mean.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agnomap/micronet/network.hpp"
#include "agnomap/saliency_map.hpp"

namespace agnomap::metrics {

using micronet::Classifier;
using Distribution = Vector<double>;

inline constexpr double kProbabilityFloor = 1e-12;

struct MapScore {
    int label = 0;
    int predicted = 0;
    double kl = 0.0;
};

struct ScoreReport {
    double m_score = 0.0;
    int num_concepts = 0;
    std::vector<double> per_map_kl;
    Distribution marginal;
    std::vector<MapScore> maps;
    std::string source_id;
    std::string target_id;

    /// Fraction of maps whose predicted label equals their label.
    [[nodiscard]] double hit_rate() const;
};

/// Softmax of the target model on the display-normalized map.
Distribution conditional_dist(const Classifier& target, const SaliencyMap& map);

/// Elementwise mean.
Distribution marginal_dist(std::span<const Distribution> conditionals);

/// sum p log(p / max(q, 1e-12)), terms with p = 0 contribute 0.
double kl(const Distribution& p, const Distribution& q);

/// Score from precomputed conditionals. `concepts` may be empty.
ScoreReport m_score(std::span<const Distribution> conditionals, int num_concepts, std::span<const int> concepts = {});

ScoreReport m_score(const Classifier& target, std::span<const SaliencyMap> maps, int num_concepts);

/// Same protocol on arbitrary images in [0, 1] (e.g. a noise baseline), one per row.
ScoreReport m_score_images(const Classifier& target, const Batch& images, int num_concepts);

/// <stem>.txt holds key = value lines, <stem>.tsv the per-map rows.
void write_report(const ScoreReport& report, const std::filesystem::path& txt, const std::filesystem::path& tsv);

}  // namespace agnomap::metrics

#endif  // AGNOMAP_METRICS_HPP
