#include "mvor/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <json.hpp>

namespace mvor {

namespace {

constexpr int kLevels = 4;

struct Joint {
    double v[6];
};

double dist2(const Joint& a, const Joint& b) {
    double acc = 0.0;
    for (int k = 0; k < 6; ++k) {
        double d = a.v[k] - b.v[k];
        acc += d * d;
    }
    return acc;
}

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL;
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL;
        h ^= h >> 29;
        return static_cast<std::size_t>(h);
    }
};

/// Spatial hash over xyz with cell size eps: any joint-space neighbor within
/// eps is also within eps spatially, so the 27 surrounding cells suffice.
class SpatialGrid {
public:
    SpatialGrid(const std::vector<Joint>& points, double eps) : points_(points), eps_(eps) {
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key_of(points[i])].push_back(static_cast<int>(i));
    }

    std::vector<int> neighbors(int i, double eps2) const {
        CellKey c = key_of(points_[static_cast<std::size_t>(i)]);
        std::vector<int> out;
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells_.end()) continue;
                    for (int j : it->second)
                        if (dist2(points_[static_cast<std::size_t>(i)],
                                  points_[static_cast<std::size_t>(j)]) <= eps2)
                            out.push_back(j);
                }
        return out;
    }

private:
    CellKey key_of(const Joint& p) const {
        return {static_cast<std::int64_t>(std::floor(p.v[0] / eps_)),
                static_cast<std::int64_t>(std::floor(p.v[1] / eps_)),
                static_cast<std::int64_t>(std::floor(p.v[2] / eps_))};
    }

    const std::vector<Joint>& points_;
    double eps_;
    std::unordered_map<CellKey, std::vector<int>, CellHash> cells_;
};

}  // namespace

std::vector<ObjectSeed> density_cluster(const SemiDenseMap& map, const ClusterOptions& options) {
    if (!(options.base_eps > 0)) throw std::invalid_argument("base_eps must be positive");
    if (options.min_pts < 3) throw std::invalid_argument("min_pts must be at least 3");
    if (options.color_weight < 0) throw std::invalid_argument("color_weight must be nonnegative");

    std::vector<ObjectSeed> seeds;
    const int n = static_cast<int>(map.size());
    if (n == 0) return seeds;

    std::vector<Joint> joint(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const SemiDenseMap::Point& p = map.points[static_cast<std::size_t>(i)];
        joint[static_cast<std::size_t>(i)] = {
            {p.x, p.y, p.z, options.color_weight * p.r, options.color_weight * p.g,
             options.color_weight * p.b}};
    }

    int next_id = 0;
    for (int level = 0; level < kLevels; ++level) {
        double eps = options.base_eps * static_cast<double>(1 << level);
        double eps2 = eps * eps;
        SpatialGrid grid(joint, eps);

        std::vector<char> visited(static_cast<std::size_t>(n), 0);
        std::vector<int> cluster_of(static_cast<std::size_t>(n), -1);
        for (int i = 0; i < n; ++i) {
            if (visited[static_cast<std::size_t>(i)]) continue;
            visited[static_cast<std::size_t>(i)] = 1;
            std::vector<int> queue = grid.neighbors(i, eps2);
            if (static_cast<int>(queue.size()) < options.min_pts) continue;

            ObjectSeed seed;
            seed.level = level;
            cluster_of[static_cast<std::size_t>(i)] = i;  // any unique tag works
            seed.members.push_back(i);
            for (std::size_t q = 0; q < queue.size(); ++q) {
                int j = queue[q];
                if (cluster_of[static_cast<std::size_t>(j)] == -1) {
                    cluster_of[static_cast<std::size_t>(j)] = i;
                    seed.members.push_back(j);
                }
                if (visited[static_cast<std::size_t>(j)]) continue;
                visited[static_cast<std::size_t>(j)] = 1;
                std::vector<int> nb = grid.neighbors(j, eps2);
                if (static_cast<int>(nb.size()) >= options.min_pts)
                    queue.insert(queue.end(), nb.begin(), nb.end());
            }

            // Border points claimed by an earlier cluster can shrink this one
            // below min_pts; such remnants go back to noise so a later cluster
            // may still adopt them.
            if (static_cast<int>(seed.members.size()) < options.min_pts) {
                for (int m : seed.members) cluster_of[static_cast<std::size_t>(m)] = -1;
                cluster_of[static_cast<std::size_t>(i)] = -2;  // still not re-claimable as a core
                continue;
            }

            std::sort(seed.members.begin(), seed.members.end());
            double sx = 0, sy = 0, sz = 0;
            for (int m : seed.members) {
                const SemiDenseMap::Point& p = map.points[static_cast<std::size_t>(m)];
                sx += p.x;
                sy += p.y;
                sz += p.z;
            }
            double inv = 1.0 / static_cast<double>(seed.members.size());
            seed.centroid = {sx * inv, sy * inv, sz * inv};
            seed.id = next_id++;
            seeds.push_back(std::move(seed));
        }
    }
    return seeds;
}

std::optional<Proposal> project_seed(const ObjectSeed& seed, const SemiDenseMap& map,
                                     const Pose& cam_to_world, const CameraIntrinsics& intr,
                                     int frame_id, int min_visible_points) {
    if (min_visible_points < 1) throw std::invalid_argument("min_visible_points must be positive");
    std::vector<Vec2> pixels;
    std::vector<double> depths;
    for (int m : seed.members) {
        if (m < 0 || static_cast<std::size_t>(m) >= map.size())
            throw std::invalid_argument("seed references point " + std::to_string(m) +
                                        " outside the map");
        const SemiDenseMap::Point& p = map.points[static_cast<std::size_t>(m)];
        std::optional<Projection> proj = project({p.x, p.y, p.z}, cam_to_world, intr);
        if (!proj) continue;
        pixels.push_back(proj->pixel);
        depths.push_back(proj->depth);
    }
    if (static_cast<int>(pixels.size()) < min_visible_points) return std::nullopt;

    std::sort(depths.begin(), depths.end());
    std::size_t mid = depths.size() / 2;
    double median = depths.size() % 2 == 1 ? depths[mid] : 0.5 * (depths[mid - 1] + depths[mid]);

    BoundingBox box = enclosing_box(pixels);
    box.x_min = std::max(box.x_min, 0.0);
    box.y_min = std::max(box.y_min, 0.0);
    box.x_max = std::min(box.x_max, static_cast<double>(intr.width));
    box.y_max = std::min(box.y_max, static_cast<double>(intr.height));

    Proposal out;
    out.seed_id = seed.id;
    out.frame_id = frame_id;
    out.box = box;
    out.median_depth = median;
    out.visible_count = static_cast<int>(pixels.size());
    return out;
}

std::vector<Proposal> filter_proposals(const std::vector<Proposal>& proposals, double iou_thresh,
                                       double min_side_px) {
    if (proposals.empty()) return {};
    for (const Proposal& p : proposals)
        if (p.frame_id != proposals.front().frame_id)
            throw std::invalid_argument("filter_proposals expects proposals from a single frame");

    std::vector<const Proposal*> big;
    for (const Proposal& p : proposals)
        if (p.box.width() >= min_side_px && p.box.height() >= min_side_px) big.push_back(&p);

    std::sort(big.begin(), big.end(), [](const Proposal* a, const Proposal* b) {
        if (a->median_depth != b->median_depth) return a->median_depth < b->median_depth;
        if (a->visible_count != b->visible_count) return a->visible_count > b->visible_count;
        return a->seed_id < b->seed_id;
    });

    std::vector<Proposal> kept;
    for (const Proposal* p : big) {
        bool occluded = false;
        for (const Proposal& k : kept)
            if (iou(k.box, p->box) > iou_thresh) {
                occluded = true;
                break;
            }
        if (!occluded) kept.push_back(*p);
    }
    return kept;
}

void save_proposals(const std::vector<Proposal>& proposals, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open proposals file for writing: " + path.string());
    for (const Proposal& p : proposals) {
        nlohmann::json j{{"frame", p.frame_id},
                         {"seed", p.seed_id},
                         {"box", {p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max}},
                         {"median_depth", p.median_depth},
                         {"visible_points", p.visible_count}};
        f << j.dump() << "\n";
    }
    if (!f.good()) throw std::runtime_error("failed to write proposals: " + path.string());
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open proposals file: " + path.string());
    std::vector<Proposal> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            Proposal p;
            p.frame_id = j.at("frame").get<int>();
            p.seed_id = j.at("seed").get<int>();
            const auto& b = j.at("box");
            if (b.size() != 4) throw std::runtime_error("box needs 4 numbers");
            p.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                     b[3].get<double>()};
            p.median_depth = j.at("median_depth").get<double>();
            p.visible_count = j.at("visible_points").get<int>();
            out.push_back(p);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return out;
}

}  // namespace mvor
