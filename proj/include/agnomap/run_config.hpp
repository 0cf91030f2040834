#ifndef AGNOMAP_RUN_CONFIG_HPP
#define AGNOMAP_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agnomap/micronet/train.hpp"
#include "agnomap/pipeline.hpp"
#include "agnomap/trojanscan.hpp"

namespace agnomap {

enum class KeyType { Int, UInt, Real, Text, Path, Flag };

struct KeySpec {
    std::string name;
    KeyType type;
    std::string desk;   // default under profile = desk
    std::string paper;  // default under profile = paper
    std::string help;
    bool output_only = false;  // written to meta.txt, ignored when read back
};

/// Flat key = value configuration. Values resolve as: explicit setting, else
/// the default of the active profile.
class RunConfig {
public:
    static const std::vector<KeySpec>& schema();
    static const KeySpec* find(std::string_view key);

    /// Throws ConfigError for unknown keys or values that do not parse as the key's type.
    void set(const std::string& key, const std::string& value);
    /// `key = value` lines, `#` starts a comment.
    void load_file(const std::filesystem::path& path);

    [[nodiscard]] bool is_set(const std::string& key) const { return values_.count(key) > 0; }
    [[nodiscard]] std::string get(const std::string& key) const;
    [[nodiscard]] long long get_int(const std::string& key) const;
    [[nodiscard]] std::uint64_t get_u64(const std::string& key) const;
    [[nodiscard]] double get_real(const std::string& key) const;
    [[nodiscard]] bool get_flag(const std::string& key) const;

    /// Checks every numeric key against the module invariants.
    void validate() const;

    /// Every non-output key with its resolved value, in schema order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> resolved() const;

    [[nodiscard]] ImageShape image_shape() const;
    [[nodiscard]] micronet::TrainConfig train_config() const;
    [[nodiscard]] pipeline::PipelineConfig pipeline_config() const;
    [[nodiscard]] trojanscan::ScanConfig scan_config() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace agnomap

#endif  // AGNOMAP_RUN_CONFIG_HPP
