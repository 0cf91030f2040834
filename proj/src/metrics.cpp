#include "agnomap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace agnomap::metrics {

double ScoreReport::hit_rate() const {
    if (maps.empty()) return 0.0;
    const auto hits = std::count_if(maps.begin(), maps.end(), [](const MapScore& m) { return m.predicted == m.label; });
    return double(hits) / double(maps.size());
}

Distribution conditional_dist(const Classifier& target, const SaliencyMap& map) {
    if (map.shape != target.input_shape() || map.nu.size() != target.input_shape().size())
        throw InputError("conditional_dist: map shape " + to_string(map.shape) + " does not match model input " +
                         to_string(target.input_shape()));
    Batch row = display_normalize(map.nu).transpose();
    return target.probabilities(row).row(0).transpose().cast<double>();
}

Distribution marginal_dist(std::span<const Distribution> conditionals) {
    if (conditionals.empty()) throw InputError("marginal_dist: no conditionals");
    Distribution sum = Distribution::Zero(conditionals.front().size());
    for (const auto& c : conditionals) {
        if (c.size() != sum.size()) throw InputError("marginal_dist: distributions differ in length");
        sum += c;
    }
    return sum / double(conditionals.size());
}

double kl(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size()) throw InputError("kl: distributions differ in length");
    double d = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) d += p[i] * std::log(p[i] / std::max(q[i], kProbabilityFloor));
    return std::max(d, 0.0);
}

ScoreReport m_score(std::span<const Distribution> conditionals, int num_concepts, std::span<const int> concepts) {
    if (conditionals.empty()) throw InputError("m_score: no maps");
    if (num_concepts < 1) throw InputError("m_score: number of concepts must be >= 1");
    if (!concepts.empty() && concepts.size() != conditionals.size())
        throw InputError("m_score: concept list length mismatch");
    ScoreReport r;
    r.num_concepts = num_concepts;
    r.marginal = marginal_dist(conditionals);
    double total = 0.0;
    for (std::size_t i = 0; i < conditionals.size(); ++i) {
        MapScore m;
        m.label = concepts.empty() ? -1 : concepts[i];
        conditionals[i].maxCoeff(&m.predicted);
        m.kl = kl(conditionals[i], r.marginal);
        total += m.kl;
        r.per_map_kl.push_back(m.kl);
        r.maps.push_back(m);
    }
    r.m_score = std::exp(total / double(conditionals.size())) / double(num_concepts);
    return r;
}

ScoreReport m_score(const Classifier& target, std::span<const SaliencyMap> maps, int num_concepts) {
    if (maps.empty()) throw InputError("m_score: no maps");
    std::vector<Distribution> cond;
    std::vector<int> concepts;
    for (const auto& m : maps) {
        cond.push_back(conditional_dist(target, m));
        concepts.push_back(m.label);
    }
    return m_score(cond, num_concepts, concepts);
}

ScoreReport m_score_images(const Classifier& target, const Batch& images, int num_concepts) {
    if (images.rows() == 0) throw InputError("m_score_images: no images");
    const Batch probs = target.probabilities(images);
    std::vector<Distribution> cond;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) cond.push_back(probs.row(i).transpose().cast<double>());
    return m_score(cond, num_concepts);
}

void write_report(const ScoreReport& report, const std::filesystem::path& txt, const std::filesystem::path& tsv) {
    for (const auto* p : {&txt, &tsv})
        if (!p->parent_path().empty()) std::filesystem::create_directories(p->parent_path());
    std::ofstream out(txt);
    if (!out) throw std::runtime_error("write_report: cannot open " + txt.string());
    out << std::setprecision(17);
    out << "m_score = " << report.m_score << '\n';
    out << "num_concepts = " << report.num_concepts << '\n';
    out << "num_maps = " << report.maps.size() << '\n';
    out << "hit_rate = " << report.hit_rate() << '\n';
    out << "source_id = " << report.source_id << '\n';
    out << "target_id = " << report.target_id << '\n';
    out << "marginal =";
    for (Eigen::Index i = 0; i < report.marginal.size(); ++i) out << ' ' << report.marginal[i];
    out << '\n';
    if (!out) throw std::runtime_error("write_report: write failed for " + txt.string());

    std::ofstream rows(tsv);
    if (!rows) throw std::runtime_error("write_report: cannot open " + tsv.string());
    rows << std::setprecision(17) << "concept\tpredicted_label\tkl\n";
    for (const auto& m : report.maps) rows << m.label << '\t' << m.predicted << '\t' << m.kl << '\n';
    if (!rows) throw std::runtime_error("write_report: write failed for " + tsv.string());
}

}  // namespace agnomap::metrics
