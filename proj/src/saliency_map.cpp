#include "agnomap/saliency_map.hpp"

#include <cmath>

#include "agnomap/micronet/checkpoint.hpp"

namespace agnomap {

VectorXf project(const VectorXf& nu, float eta) {
    if (!(eta > 0.f)) throw ConfigError("project: eta must be positive");
    const double norm = nu.cast<double>().norm();
    if (norm == 0.0 || norm <= double(eta)) return nu;
    const double scale = double(eta) / norm;
    VectorXf out = (nu.cast<double>() * scale).cast<float>();
    // float rounding can leave the norm a hair above eta
    while (out.cast<double>().norm() > double(eta)) out *= 1.f - 1e-7f;
    return out;
}

VectorXf display_normalize(const VectorXf& nu) {
    if (nu.size() == 0) return nu;
    const float lo = nu.minCoeff(), hi = nu.maxCoeff();
    if (!(hi > lo)) return VectorXf::Constant(nu.size(), 0.5f);
    return ((nu.array() - lo) / (hi - lo)).matrix();
}

void save_map(const SaliencyMap& map, const std::filesystem::path& path) {
    using namespace micronet;
    std::vector<Record> records;
    records.push_back({kMapMetaTag, {std::uint32_t(map.label), std::uint32_t(map.iterations)}, {map.eta}});
    records.push_back({kTensorTag,
                       {std::uint32_t(map.shape.height), std::uint32_t(map.shape.width), std::uint32_t(map.shape.channels)},
                       std::vector<float>(map.nu.data(), map.nu.data() + map.nu.size())});
    write_records(path, records);
}

SaliencyMap load_map(const std::filesystem::path& path) {
    using namespace micronet;
    const std::vector<Record> records = read_records(path);
    if (records.size() != 2 || records[0].tag != kMapMetaTag || records[1].tag != kTensorTag ||
        records[0].ints.size() != 2 || records[0].floats.size() != 1 || records[1].ints.size() != 3)
        throw InputError("load_map: " + path.string() + " is not a map checkpoint");
    SaliencyMap m;
    m.label = int(records[0].ints[0]);
    m.iterations = int(records[0].ints[1]);
    m.eta = records[0].floats[0];
    m.shape = {int(records[1].ints[0]), int(records[1].ints[1]), int(records[1].ints[2])};
    if (std::size_t(m.shape.size()) != records[1].floats.size()) throw InputError("load_map: tensor size mismatch");
    m.nu = Eigen::Map<const VectorXf>(records[1].floats.data(), m.shape.size());
    return m;
}

}  // namespace agnomap
