#include "mvor/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mvor {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& why) {
    throw std::invalid_argument("config key '" + key + "': " + why);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::string v = trim(value);
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        bad_value(key, "cannot parse '" + v + "' as a number");
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct FieldDef {
    const char* key;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

void set_int(const std::string& key, int& slot, const std::string& value, int lo) {
    int v = parse_number<int>(key, value);
    if (v < lo) bad_value(key, "must be >= " + std::to_string(lo) + ", got " + std::to_string(v));
    slot = v;
}

void set_double(const std::string& key, double& slot, const std::string& value, double lo,
                double hi, bool lo_open) {
    double v = parse_number<double>(key, value);
    bool below = lo_open ? v <= lo : v < lo;
    if (below || v > hi)
        bad_value(key, "must be in " + std::string(lo_open ? "(" : "[") + format_double(lo) +
                           ", " + format_double(hi) + "], got " + format_double(v));
    slot = v;
}

const std::vector<FieldDef>& fields() {
    static const std::vector<FieldDef> defs = {
        {"feature_step", [](const PipelineConfig& c) { return std::to_string(c.feature_step); },
         [](PipelineConfig& c, const std::string& v) { set_int("feature_step", c.feature_step, v, 1); }},
        {"feature_scales", [](const PipelineConfig& c) { return std::to_string(c.feature_scales); },
         [](PipelineConfig& c, const std::string& v) { set_int("feature_scales", c.feature_scales, v, 1); }},
        {"scale_factor", [](const PipelineConfig& c) { return format_double(c.scale_factor); },
         [](PipelineConfig& c, const std::string& v) {
             double x = parse_number<double>("scale_factor", v);
             if (x <= 1.0) bad_value("scale_factor", "must be > 1, got " + format_double(x));
             c.scale_factor = x;
         }},
        {"pca_dim", [](const PipelineConfig& c) { return std::to_string(c.pca_dim); },
         [](PipelineConfig& c, const std::string& v) { set_int("pca_dim", c.pca_dim, v, 1); }},
        {"vocab_k", [](const PipelineConfig& c) { return std::to_string(c.vocab_k); },
         [](PipelineConfig& c, const std::string& v) { set_int("vocab_k", c.vocab_k, v, 2); }},
        {"pyramid",
         [](const PipelineConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.pyramid.size(); ++i) {
                 if (i) out += ',';
                 out += std::to_string(c.pyramid[i]);
             }
             return out;
         },
         [](PipelineConfig& c, const std::string& v) {
             std::vector<int> grids;
             std::stringstream ss(v);
             std::string part;
             while (std::getline(ss, part, ','))
                 grids.push_back(parse_number<int>("pyramid", part));
             if (grids.empty()) bad_value("pyramid", "needs at least one grid size");
             for (int g : grids)
                 if (g < 1) bad_value("pyramid", "grid sizes must be >= 1, got " + std::to_string(g));
             c.pyramid = std::move(grids);
         }},
        {"ssr_alpha", [](const PipelineConfig& c) { return format_double(c.ssr_alpha); },
         [](PipelineConfig& c, const std::string& v) { set_double("ssr_alpha", c.ssr_alpha, v, 0.0, 1.0, true); }},
        {"flair_cell", [](const PipelineConfig& c) { return std::to_string(c.flair_cell); },
         [](PipelineConfig& c, const std::string& v) { set_int("flair_cell", c.flair_cell, v, 1); }},
        {"l2_reg_alpha", [](const PipelineConfig& c) { return format_double(c.l2_reg_alpha); },
         [](PipelineConfig& c, const std::string& v) { set_double("l2_reg_alpha", c.l2_reg_alpha, v, 0.0, 1.0, true); }},
        {"classifier_epochs", [](const PipelineConfig& c) { return std::to_string(c.classifier_epochs); },
         [](PipelineConfig& c, const std::string& v) { set_int("classifier_epochs", c.classifier_epochs, v, 1); }},
        {"hard_negative_epochs", [](const PipelineConfig& c) { return std::to_string(c.hard_negative_epochs); },
         [](PipelineConfig& c, const std::string& v) { set_int("hard_negative_epochs", c.hard_negative_epochs, v, 0); }},
        {"probability_floor", [](const PipelineConfig& c) { return format_double(c.probability_floor); },
         [](PipelineConfig& c, const std::string& v) { set_double("probability_floor", c.probability_floor, v, 0.0, 0.01, true); }},
        {"cluster_base_eps", [](const PipelineConfig& c) { return format_double(c.cluster_base_eps); },
         [](PipelineConfig& c, const std::string& v) {
             double x = parse_number<double>("cluster_base_eps", v);
             if (x <= 0) bad_value("cluster_base_eps", "must be > 0, got " + format_double(x));
             c.cluster_base_eps = x;
         }},
        {"cluster_color_weight", [](const PipelineConfig& c) { return format_double(c.cluster_color_weight); },
         [](PipelineConfig& c, const std::string& v) {
             double x = parse_number<double>("cluster_color_weight", v);
             if (x < 0) bad_value("cluster_color_weight", "must be >= 0, got " + format_double(x));
             c.cluster_color_weight = x;
         }},
        {"cluster_min_pts", [](const PipelineConfig& c) { return std::to_string(c.cluster_min_pts); },
         [](PipelineConfig& c, const std::string& v) { set_int("cluster_min_pts", c.cluster_min_pts, v, 2); }},
        {"min_visible_points", [](const PipelineConfig& c) { return std::to_string(c.min_visible_points); },
         [](PipelineConfig& c, const std::string& v) { set_int("min_visible_points", c.min_visible_points, v, 1); }},
        {"proposal_min_side", [](const PipelineConfig& c) { return format_double(c.proposal_min_side); },
         [](PipelineConfig& c, const std::string& v) {
             double x = parse_number<double>("proposal_min_side", v);
             if (x < 0) bad_value("proposal_min_side", "must be >= 0, got " + format_double(x));
             c.proposal_min_side = x;
         }},
        {"proposal_iou", [](const PipelineConfig& c) { return format_double(c.proposal_iou); },
         [](PipelineConfig& c, const std::string& v) { set_double("proposal_iou", c.proposal_iou, v, 0.0, 1.0, true); }},
        {"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
         [](PipelineConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
        {"threads", [](const PipelineConfig& c) { return std::to_string(c.threads); },
         [](PipelineConfig& c, const std::string& v) { set_int("threads", c.threads, v, 1); }},
    };
    return defs;
}

const FieldDef* find_field(const std::string& key) {
    for (const FieldDef& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const FieldDef& f : fields()) keys.push_back(f.key);
    return keys;
}

std::string get_config_value(const PipelineConfig& config, const std::string& key) {
    const FieldDef* f = find_field(key);
    if (!f) throw std::invalid_argument("unknown config key '" + key + "'");
    return f->get(config);
}

void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
    const FieldDef* f = find_field(key);
    if (!f) throw std::invalid_argument("unknown config key '" + key + "'");
    f->set(config, value);
}

std::string format_config(const PipelineConfig& config) {
    std::string out = "# recognition pipeline configuration\n";
    for (const FieldDef& f : fields()) {
        out += f.key;
        out += " = ";
        out += f.get(config);
        out += '\n';
    }
    return out;
}

PipelineConfig parse_config(const std::string& text, const std::string& source_name) {
    PipelineConfig config;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        auto fail = [&](const std::string& why) {
            throw std::runtime_error(source_name + " line " + std::to_string(line_no) + ": " + why);
        };
        if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail("empty key");
        try {
            set_config_value(config, key, value);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file '" + path.string() + "'");
    out << format_config(config);
    if (!out) throw std::runtime_error("failed writing config file '" + path.string() + "'");
}

} // namespace mvor
