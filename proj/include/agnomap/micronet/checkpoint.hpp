#ifndef AGNOMAP_MICRONET_CHECKPOINT_HPP
#define AGNOMAP_MICRONET_CHECKPOINT_HPP

// Binary container shared by model and map checkpoints:
//
//   "AGNM1"                        5 magic bytes
//   u32 record_count
//   record*:
//     u32 tag
//     u32 n_ints,   u32 ints[n_ints]
//     u32 n_floats, f32 floats[n_floats]
//
// All integers and floats are little-endian. A model file holds one Header
// record (ints: h, w, c, num_classes, layer_count) followed by one record per
// layer whose tag is the LayerKind value; Conv2d ints are (kernel, c_in,
// c_out, padding) and Dense ints are (n_in, n_out); floats are the weights
// followed by the biases.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "agnomap/micronet/network.hpp"

namespace agnomap::micronet {

inline constexpr char kMagic[5] = {'A', 'G', 'N', 'M', '1'};

struct Record {
    std::uint32_t tag = 0;
    std::vector<std::uint32_t> ints;
    std::vector<float> floats;
    bool operator==(const Record&) const = default;
};

enum RecordTag : std::uint32_t {
    kHeaderTag = 100,
    kMapMetaTag = 200,
    kTensorTag = 201,
};

void write_records(std::ostream& out, const std::vector<Record>& records);
std::vector<Record> read_records(std::istream& in);

void write_records(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_records(const std::filesystem::path& path);

std::vector<Record> to_records(const Classifier& model);
Classifier from_records(const std::vector<Record>& records);

void save(const Classifier& model, const std::filesystem::path& path);
Classifier load(const std::filesystem::path& path);

}  // namespace agnomap::micronet

#endif  // AGNOMAP_MICRONET_CHECKPOINT_HPP
