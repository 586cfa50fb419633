#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mvor {

/// Every tunable of the recognition pipeline in one place, with the working
/// defaults. The CLI reads one of these from a key=value file, applies flag
/// overrides, and threads it through all stages, so a run is reproducible
/// from the config plus the seed alone.
struct PipelineConfig {
    // dense descriptor grid
    int feature_step = 4;
    int feature_scales = 4;
    double scale_factor = 1.4142135623730951; // sqrt(2) between pyramid levels
    // descriptor projection
    int pca_dim = 80;
    // visual vocabulary
    int vocab_k = 64;
    // box encoding
    std::vector<int> pyramid = {1, 2, 4}; // spatial grid subdivisions
    double ssr_alpha = 0.5;
    int flair_cell = 8; // integral-grid cell side, pixels
    // classifier
    double l2_reg_alpha = 1e-5;
    int classifier_epochs = 10;
    int hard_negative_epochs = 2;
    double probability_floor = 1e-9;
    // map clustering
    double cluster_base_eps = 0.04;
    double cluster_color_weight = 0.5;
    int cluster_min_pts = 10;
    // proposal filtering
    int min_visible_points = 15;
    double proposal_min_side = 20.0; // pixels
    double proposal_iou = 0.5;
    // reproducibility and execution
    std::uint64_t seed = 1;
    int threads = 1;

    bool operator==(const PipelineConfig&) const = default;
};

/// All recognized keys, in file order.
std::vector<std::string> config_keys();

/// Value of one key, formatted exactly as save_config writes it. Throws
/// std::invalid_argument naming the key when it is not recognized.
std::string get_config_value(const PipelineConfig& config, const std::string& key);

/// Sets one key from its text form, validating the range. Unknown keys and
/// out-of-range or malformed values throw std::invalid_argument naming the
/// key. This is the single mutation path shared by the file parser and
/// command-line overrides, so both enforce identical rules.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

/// Full key=value rendering; parse_config(format_config(c), ...) == c.
/// Doubles are printed with 17 significant digits so the round trip is exact.
std::string format_config(const PipelineConfig& config);

/// Parses key=value lines. '#' starts a comment, blank lines are skipped,
/// whitespace around keys and values is ignored. Errors throw
/// std::runtime_error as "<source_name> line N: ...".
PipelineConfig parse_config(const std::string& text, const std::string& source_name);

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

} // namespace mvor
