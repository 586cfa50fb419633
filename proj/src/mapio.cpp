#include "mvor/mapio.hpp"

#include "mvor/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mvor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& msg) {
    throw std::runtime_error(path.string() + ": " + msg);
}

[[noreturn]] void fail_line(const fs::path& path, int line, const std::string& msg) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int clamp_255(float v) {
    int i = static_cast<int>(std::lround(v * 255.0f));
    return std::min(255, std::max(0, i));
}

} // namespace

// ---------------------------------------------------------------------------
// PLY point cloud
// ---------------------------------------------------------------------------

SemiDenseMap load_cloud_ply(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");

    std::string line;
    int lineno = 0;
    auto getline_checked = [&]() {
        if (!std::getline(in, line)) fail_line(path, lineno, "unexpected end of file");
        ++lineno;
    };

    getline_checked();
    if (line != "ply") fail_line(path, lineno, "not a PLY file (missing 'ply' magic)");
    getline_checked();
    if (line.rfind("format ascii", 0) != 0)
        fail_line(path, lineno, "only ASCII PLY supported, got '" + line + "'");

    std::size_t vertex_count = 0;
    bool in_vertex = false;
    std::vector<std::string> props;
    while (true) {
        getline_checked();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment") continue;
        if (tok == "element") {
            std::string name;
            std::size_t count;
            if (!(ss >> name >> count)) fail_line(path, lineno, "malformed element line");
            in_vertex = (name == "vertex");
            if (in_vertex) vertex_count = count;
        } else if (tok == "property") {
            if (!in_vertex) continue;
            std::string type, name;
            if (!(ss >> type >> name)) fail_line(path, lineno, "malformed property line");
            if (type == "list") fail_line(path, lineno, "list properties not supported");
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        } else if (tok.empty()) {
            continue;
        } else {
            fail_line(path, lineno, "unexpected header token '" + tok + "'");
        }
    }

    auto col = [&](const std::string& name) -> int {
        auto it = std::find(props.begin(), props.end(), name);
        return it == props.end() ? -1 : static_cast<int>(it - props.begin());
    };
    int cx = col("x"), cy = col("y"), cz = col("z");
    int cr = col("red"), cg = col("green"), cb = col("blue");
    int ck = col("keyframe");
    if (cx < 0 || cy < 0 || cz < 0) fail(path, "vertex element lacks x/y/z properties");
    if (cr < 0 || cg < 0 || cb < 0) fail(path, "vertex element lacks red/green/blue properties");

    SemiDenseMap map;
    map.points.reserve(vertex_count);
    if (ck >= 0) map.keyframe_ids.reserve(vertex_count);
    std::vector<double> vals(props.size());
    for (std::size_t i = 0; i < vertex_count; ++i) {
        getline_checked();
        std::istringstream ss(line);
        for (std::size_t p = 0; p < props.size(); ++p)
            if (!(ss >> vals[p]))
                fail_line(path, lineno, "expected " + std::to_string(props.size()) +
                                            " values, row truncated");
        SemiDenseMap::Point pt;
        pt.x = vals[cx];
        pt.y = vals[cy];
        pt.z = vals[cz];
        if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.z))
            fail_line(path, lineno, "non-finite coordinate");
        double r = vals[cr], g = vals[cg], b = vals[cb];
        if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
            fail_line(path, lineno, "color outside 0..255");
        pt.r = static_cast<float>(r / 255.0);
        pt.g = static_cast<float>(g / 255.0);
        pt.b = static_cast<float>(b / 255.0);
        map.points.push_back(pt);
        if (ck >= 0) map.keyframe_ids.push_back(static_cast<int>(vals[ck]));
    }
    return map;
}

void save_cloud_ply(const SemiDenseMap& map, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    bool with_kf = !map.keyframe_ids.empty();
    if (with_kf && map.keyframe_ids.size() != map.points.size())
        throw std::invalid_argument("keyframe id count does not match point count");
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << map.points.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (with_kf) out << "property int keyframe\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < map.points.size(); ++i) {
        const auto& p = map.points[i];
        out << fmt_g17(p.x) << " " << fmt_g17(p.y) << " " << fmt_g17(p.z) << " " << clamp_255(p.r)
            << " " << clamp_255(p.g) << " " << clamp_255(p.b);
        if (with_kf) out << " " << map.keyframe_ids[i];
        out << "\n";
    }
    if (!out) fail(path, "write failed");
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

std::vector<FrameRecord> load_trajectory(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    std::vector<FrameRecord> frames;
    std::string line;
    int lineno = 0;
    int last_id = std::numeric_limits<int>::min();
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        FrameRecord rec;
        double tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> rec.frame_id >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            fail_line(path, lineno, "expected 'frame_id tx ty tz qx qy qz qw'");
        if (rec.frame_id <= last_id)
            fail_line(path, lineno, "frame ids must be unique and ascending");
        last_id = rec.frame_id;
        try {
            rec.pose = Pose(Quat{qw, qx, qy, qz}, Vec3{tx, ty, tz});
        } catch (const std::exception& e) {
            fail_line(path, lineno, e.what());
        }
        frames.push_back(std::move(rec));
    }
    return frames;
}

void save_trajectory(const std::vector<FrameRecord>& frames, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    for (const auto& f : frames) {
        out << f.frame_id << " " << fmt_g17(f.pose.t.x) << " " << fmt_g17(f.pose.t.y) << " "
            << fmt_g17(f.pose.t.z) << " " << fmt_g17(f.pose.q.x) << " " << fmt_g17(f.pose.q.y)
            << " " << fmt_g17(f.pose.q.z) << " " << fmt_g17(f.pose.q.w) << "\n";
    }
    if (!out) fail(path, "write failed");
}

// ---------------------------------------------------------------------------
// Intrinsics
// ---------------------------------------------------------------------------

CameraIntrinsics load_intrinsics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    double fx, fy, cx, cy;
    int w, h;
    if (!(in >> fx >> fy >> cx >> cy >> w >> h))
        fail(path, "expected 'fx fy cx cy width height'");
    try {
        return CameraIntrinsics(fx, fy, cx, cy, w, h);
    } catch (const std::exception& e) {
        fail(path, e.what());
    }
}

void save_intrinsics(const CameraIntrinsics& intr, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    out << fmt_g17(intr.fx) << " " << fmt_g17(intr.fy) << " " << fmt_g17(intr.cx) << " "
        << fmt_g17(intr.cy) << " " << intr.width << " " << intr.height << "\n";
    if (!out) fail(path, "write failed");
}

// ---------------------------------------------------------------------------
// Annotations (JSON lines)
// ---------------------------------------------------------------------------

std::vector<Annotation> load_annotations(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    std::vector<Annotation> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line(path, lineno, std::string("bad JSON: ") + e.what());
        }
        Annotation a;
        try {
            a.frame_id = j.at("frame").get<int>();
            auto box = j.at("box");
            a.box = BoundingBox{box.at(0).get<double>(), box.at(1).get<double>(),
                                box.at(2).get<double>(), box.at(3).get<double>()};
            a.label = j.at("label").get<std::string>();
            if (j.contains("object")) a.object_id = j.at("object").get<int>();
        } catch (const json::exception& e) {
            fail_line(path, lineno, std::string("bad annotation: ") + e.what());
        }
        if (a.label.empty()) fail_line(path, lineno, "empty label");
        if (!a.box.valid()) fail_line(path, lineno, "invalid box (max < min)");
        out.push_back(std::move(a));
    }
    return out;
}

void save_annotations(const std::vector<Annotation>& annotations, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    for (const auto& a : annotations) {
        json j;
        j["frame"] = a.frame_id;
        j["box"] = {a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max};
        j["label"] = a.label;
        if (a.object_id >= 0) j["object"] = a.object_id;
        out << j.dump() << "\n";
    }
    if (!out) fail(path, "write failed");
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

Scene load_scene(const fs::path& directory) {
    if (!fs::is_directory(directory)) fail(directory, "not a directory");
    Scene scene;
    scene.root = directory;
    scene.intrinsics = load_intrinsics(directory / "intrinsics.txt");
    scene.map = load_cloud_ply(directory / "cloud.ply");
    scene.frames = load_trajectory(directory / "trajectory.txt");

    fs::path img_dir = directory / "images";
    if (!fs::is_directory(img_dir)) fail(img_dir, "missing images directory");
    std::map<int, fs::path> images;
    for (const auto& entry : fs::directory_iterator(img_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().stem().string();
        std::string ext = entry.path().extension().string();
        if (ext != ".png" && ext != ".ppm") continue;
        if (name.rfind("frame_", 0) != 0) continue;
        int id = 0;
        try {
            id = std::stoi(name.substr(6));
        } catch (...) {
            fail(entry.path(), "unparseable frame number");
        }
        if (!images.emplace(id, entry.path()).second)
            fail(entry.path(), "duplicate image for frame " + std::to_string(id));
    }
    if (images.size() != scene.frames.size())
        fail(directory, "frame count mismatch: trajectory has " +
                            std::to_string(scene.frames.size()) + " poses, images directory has " +
                            std::to_string(images.size()) + " frames");
    for (auto& f : scene.frames) {
        auto it = images.find(f.frame_id);
        if (it == images.end())
            fail(directory, "no image for trajectory frame " + std::to_string(f.frame_id));
        f.image_path = it->second;
    }

    fs::path ann_path = directory / "annotations.jsonl";
    if (fs::exists(ann_path)) {
        scene.annotations = load_annotations(ann_path);
        std::set<int> ids;
        for (const auto& f : scene.frames) ids.insert(f.frame_id);
        for (const auto& a : scene.annotations) {
            if (!ids.count(a.frame_id))
                fail(ann_path, "annotation references unknown frame " + std::to_string(a.frame_id));
            if (a.box.x_min < 0 || a.box.y_min < 0 || a.box.x_max > scene.intrinsics.width ||
                a.box.y_max > scene.intrinsics.height)
                fail(ann_path, "annotation box outside image bounds in frame " +
                                   std::to_string(a.frame_id));
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Model containers
// ---------------------------------------------------------------------------

const MatF& ModelContainer::mat(const std::string& name) const {
    for (const auto& [n, m] : mats)
        if (n == name) return m;
    throw std::runtime_error("model container has no matrix '" + name + "'");
}

bool ModelContainer::has_mat(const std::string& name) const {
    for (const auto& [n, m] : mats)
        if (n == name) return true;
    return false;
}

namespace {

void write_f32_le(const MatF& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  static_cast<std::streamsize>(m.data.size() * 4));
    } else {
        for (float v : m.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                         static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
            out.write(b, 4);
        }
    }
    if (!out) fail(path, "write failed");
}

MatF read_f32_le(const fs::path& path, int rows, int cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    MatF m(rows, cols);
    std::size_t expected = m.data.size() * 4;
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(expected));
    std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got != expected)
        fail(path, "blob size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                       std::to_string(got));
    char extra;
    if (in.read(&extra, 1))
        fail(path, "blob size mismatch: expected " + std::to_string(expected) +
                       " bytes, file is longer");
    if constexpr (std::endian::native != std::endian::little) {
        for (float& v : m.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            bits = ((bits & 0xff) << 24) | ((bits & 0xff00) << 8) | ((bits >> 8) & 0xff00) |
                   (bits >> 24);
            std::memcpy(&v, &bits, 4);
        }
    }
    return m;
}

} // namespace

void save_model(const ModelContainer& container, const fs::path& directory) {
    fs::create_directories(directory);
    json manifest;
    manifest["format_version"] = kModelFormatVersion;
    manifest["kind"] = container.kind;
    manifest["meta"] = container.meta;
    json components = json::array();
    for (const auto& [name, m] : container.mats) {
        json c;
        c["name"] = name;
        c["rows"] = m.rows;
        c["cols"] = m.cols;
        c["file"] = name + ".f32";
        components.push_back(c);
        write_f32_le(m, directory / (name + ".f32"));
    }
    manifest["components"] = components;
    std::ofstream out(directory / "manifest.json");
    if (!out) fail(directory / "manifest.json", "cannot open for writing");
    out << manifest.dump(2) << "\n";
    if (!out) fail(directory / "manifest.json", "write failed");
}

ModelContainer load_model(const fs::path& directory) {
    fs::path manifest_path = directory / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) fail(manifest_path, "cannot open");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        fail(manifest_path, std::string("bad JSON: ") + e.what());
    }
    std::string version = manifest.value("format_version", "");
    if (version != kModelFormatVersion)
        fail(manifest_path, "format version mismatch: expected '" + std::string(kModelFormatVersion) +
                                "', got '" + version + "'");
    ModelContainer c;
    c.kind = manifest.value("kind", "");
    c.meta = manifest.value("meta", json::object());
    for (const auto& comp : manifest.at("components")) {
        std::string name = comp.at("name").get<std::string>();
        int rows = comp.at("rows").get<int>();
        int cols = comp.at("cols").get<int>();
        if (rows < 0 || cols < 0) fail(manifest_path, "negative dimensions for '" + name + "'");
        c.mats.emplace_back(name,
                            read_f32_le(directory / comp.at("file").get<std::string>(), rows, cols));
    }
    return c;
}

} // namespace mvor
