#include "agnomap/micronet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace agnomap::micronet {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) throw InputError("checkpoint: truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

// Upper bound on any count field; guards allocation from corrupt headers.
constexpr std::uint32_t kMaxCount = 1u << 28;

}  // namespace

void write_records(std::ostream& out, const std::vector<Record>& records) {
    out.write(kMagic, sizeof kMagic);
    put_u32(out, std::uint32_t(records.size()));
    for (const Record& r : records) {
        put_u32(out, r.tag);
        put_u32(out, std::uint32_t(r.ints.size()));
        for (std::uint32_t v : r.ints) put_u32(out, v);
        put_u32(out, std::uint32_t(r.floats.size()));
        for (float f : r.floats) put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

std::vector<Record> read_records(std::istream& in) {
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (in.gcount() != std::streamsize(sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw InputError("checkpoint: bad magic (expected AGNM1)");
    const std::uint32_t count = get_u32(in);
    if (count > kMaxCount) throw InputError("checkpoint: implausible record count");
    std::vector<Record> records(count);
    for (Record& r : records) {
        r.tag = get_u32(in);
        const std::uint32_t ni = get_u32(in);
        if (ni > kMaxCount) throw InputError("checkpoint: implausible int count");
        r.ints.resize(ni);
        for (auto& v : r.ints) v = get_u32(in);
        const std::uint32_t nf = get_u32(in);
        if (nf > kMaxCount) throw InputError("checkpoint: implausible float count");
        r.floats.resize(nf);
        for (auto& f : r.floats) f = std::bit_cast<float>(get_u32(in));
    }
    return records;
}

void write_records(const std::filesystem::path& path, const std::vector<Record>& records) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    write_records(out, records);
}

std::vector<Record> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open " + path.string());
    return read_records(in);
}

std::vector<Record> to_records(const Classifier& model) {
    std::vector<Record> out;
    const ImageShape& s = model.input_shape();
    out.push_back({kHeaderTag,
                   {std::uint32_t(s.height), std::uint32_t(s.width), std::uint32_t(s.channels),
                    std::uint32_t(model.num_classes()), std::uint32_t(model.layers().size())},
                   {}});
    for (const auto& l : model.layers()) {
        Record r;
        r.tag = std::uint32_t(l.kind);
        if (l.kind == LayerKind::Conv2d)
            r.ints = {std::uint32_t(l.kernel), std::uint32_t(l.in.channels), std::uint32_t(l.out.channels),
                      std::uint32_t(l.padding)};
        else if (l.kind == LayerKind::Dense)
            r.ints = {std::uint32_t(l.in.size()), std::uint32_t(l.out.size())};
        r.floats.assign(l.weight.data(), l.weight.data() + l.weight.size());
        r.floats.insert(r.floats.end(), l.bias.data(), l.bias.data() + l.bias.size());
        out.push_back(std::move(r));
    }
    return out;
}

Classifier from_records(const std::vector<Record>& records) {
    if (records.empty() || records[0].tag != kHeaderTag || records[0].ints.size() != 5)
        throw InputError("checkpoint: missing model header");
    const auto& h = records[0].ints;
    const ImageShape input{int(h[0]), int(h[1]), int(h[2])};
    if (records.size() != std::size_t(h[4]) + 1) throw InputError("checkpoint: layer count mismatch");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const Record& r = records[i];
        switch (LayerKind(r.tag)) {
            case LayerKind::Conv2d:
                if (r.ints.size() != 4 || r.ints[3] > 1) throw InputError("checkpoint: bad Conv2d record");
                specs.push_back(LayerSpec::conv(int(r.ints[2]), int(r.ints[0]), Padding(r.ints[3])));
                break;
            case LayerKind::Dense:
                if (r.ints.size() != 2) throw InputError("checkpoint: bad Dense record");
                specs.push_back(LayerSpec::dense(int(r.ints[1])));
                break;
            case LayerKind::ReLU: specs.push_back(LayerSpec::relu()); break;
            case LayerKind::MaxPool2d: specs.push_back(LayerSpec::maxpool()); break;
            case LayerKind::Flatten: specs.push_back(LayerSpec::flatten()); break;
            default: throw InputError("checkpoint: unknown layer tag " + std::to_string(r.tag));
        }
    }
    Classifier model;
    try {
        model = Classifier(input, specs);
    } catch (const ConfigError& e) {
        throw InputError(std::string("checkpoint: inconsistent architecture: ") + e.what());
    }
    if (model.num_classes() != int(h[3])) throw InputError("checkpoint: class count mismatch");
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        auto& l = model.layers()[i];
        const Record& r = records[i + 1];
        if (l.kind == LayerKind::Conv2d && r.ints[1] != std::uint32_t(l.in.channels))
            throw InputError("checkpoint: Conv2d input channels do not chain");
        if (l.kind == LayerKind::Dense && r.ints[0] != std::uint32_t(l.in.size()))
            throw InputError("checkpoint: Dense input size does not chain");
        if (r.floats.size() != std::size_t(l.weight.size() + l.bias.size()))
            throw InputError("checkpoint: parameter count mismatch in layer " + std::to_string(i));
        std::copy_n(r.floats.begin(), l.weight.size(), l.weight.data());
        std::copy(r.floats.begin() + l.weight.size(), r.floats.end(), l.bias.data());
    }
    return model;
}

void save(const Classifier& model, const std::filesystem::path& path) { write_records(path, to_records(model)); }

Classifier load(const std::filesystem::path& path) { return from_records(read_records(path)); }

}  // namespace agnomap::micronet
