#include "mvor/evalkit.hpp"

#include "mvor/classifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mvor {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string num2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

PrCurve pr_curve(const std::vector<Detection>& detections, const std::vector<Annotation>& truth,
                 double iou_thresh) {
    if (!(iou_thresh > 0.0 && iou_thresh <= 1.0))
        throw std::invalid_argument("pr_curve: iou_thresh must be in (0, 1]");

    std::map<std::string, int> gt_count;
    for (const Annotation& a : truth)
        if (a.label != kBackgroundLabel) ++gt_count[a.label];

    std::set<std::string> det_only;
    for (const Detection& d : detections)
        if (d.label != kBackgroundLabel && !gt_count.count(d.label)) det_only.insert(d.label);

    PrCurve out;
    for (const std::string& lbl : det_only) {
        out.skipped.push_back(lbl);
        std::fprintf(stderr,
                     "warning: class '%s' has detections but no ground truth; excluded from mAP\n",
                     lbl.c_str());
    }

    double ap_sum = 0.0;
    for (const auto& [lbl, ngt] : gt_count) {
        ClassPr cp;
        cp.label = lbl;
        cp.num_ground_truth = ngt;

        std::map<int, std::vector<std::size_t>> gt_by_frame;
        for (std::size_t i = 0; i < truth.size(); ++i)
            if (truth[i].label == lbl) gt_by_frame[truth[i].frame_id].push_back(i);
        std::vector<char> matched(truth.size(), 0);

        std::vector<const Detection*> cand;
        for (const Detection& d : detections)
            if (d.label == lbl) cand.push_back(&d);
        std::stable_sort(cand.begin(), cand.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });

        int tp = 0;
        for (std::size_t rank = 0; rank < cand.size(); ++rank) {
            const Detection& d = *cand[rank];
            double best_iou = 0.0;
            std::size_t best = truth.size();
            auto it = gt_by_frame.find(d.frame_id);
            if (it != gt_by_frame.end()) {
                for (std::size_t gi : it->second) {
                    if (matched[gi]) continue;
                    double v = iou(d.box, truth[gi].box);
                    if (v > best_iou) {
                        best_iou = v;
                        best = gi;
                    }
                }
            }
            if (best < truth.size() && best_iou >= iou_thresh) {
                matched[best] = 1;
                ++tp;
            }
            cp.points.push_back({d.score, static_cast<double>(tp) / static_cast<double>(rank + 1),
                                 static_cast<double>(tp) / static_cast<double>(ngt)});
        }

        // All-points interpolation: integrate the running max of precision
        // taken from the high-recall side.
        std::vector<double> envelope(cp.points.size());
        double env = 0.0;
        for (std::size_t i = cp.points.size(); i-- > 0;) {
            env = std::max(env, cp.points[i].precision);
            envelope[i] = env;
        }
        double ap = 0.0, prev_recall = 0.0;
        for (std::size_t i = 0; i < cp.points.size(); ++i) {
            ap += (cp.points[i].recall - prev_recall) * envelope[i];
            prev_recall = cp.points[i].recall;
        }
        cp.average_precision = ap;
        ap_sum += ap;
        out.classes.push_back(std::move(cp));
    }
    out.mean_average_precision =
        out.classes.empty() ? 0.0 : ap_sum / static_cast<double>(out.classes.size());
    return out;
}

std::vector<RecallRow> recall_at_iou(const std::vector<Proposal>& proposals,
                                     const std::vector<Annotation>& truth,
                                     const std::vector<double>& iou_grid) {
    if (truth.empty()) throw std::invalid_argument("recall_at_iou: empty ground truth");
    if (iou_grid.empty()) throw std::invalid_argument("recall_at_iou: empty iou grid");
    for (double t : iou_grid)
        if (!(t > 0.0 && t <= 1.0))
            throw std::invalid_argument("recall_at_iou: iou threshold must be in (0, 1]");

    std::map<int, std::vector<const Proposal*>> by_frame;
    std::set<int> frames;
    for (const Proposal& p : proposals) {
        by_frame[p.frame_id].push_back(&p);
        frames.insert(p.frame_id);
    }
    for (const Annotation& a : truth) frames.insert(a.frame_id);

    std::vector<double> best(truth.size(), 0.0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto it = by_frame.find(truth[i].frame_id);
        if (it == by_frame.end()) continue;
        for (const Proposal* p : it->second) best[i] = std::max(best[i], iou(p->box, truth[i].box));
    }

    double mean_ppf = static_cast<double>(proposals.size()) / static_cast<double>(frames.size());
    std::vector<RecallRow> rows;
    rows.reserve(iou_grid.size());
    for (double t : iou_grid) {
        std::size_t hit = 0;
        for (double b : best)
            if (b >= t) ++hit;
        rows.push_back({t, static_cast<double>(hit) / static_cast<double>(truth.size()), mean_ppf});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Detection files
// ---------------------------------------------------------------------------

void save_detections(const std::vector<Detection>& detections, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open detections file for writing: " + path.string());
    for (const Detection& d : detections) {
        nlohmann::json j{{"frame", d.frame_id},
                         {"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
                         {"label", d.label},
                         {"score", d.score}};
        f << j.dump() << "\n";
    }
    if (!f.good()) throw std::runtime_error("failed to write detections: " + path.string());
}

std::vector<Detection> load_detections(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open detections file: " + path.string());
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            Detection d;
            d.frame_id = j.at("frame").get<int>();
            const auto& b = j.at("box");
            if (b.size() != 4) throw std::runtime_error("box needs 4 numbers");
            d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                     b[3].get<double>()};
            d.label = j.at("label").get<std::string>();
            d.score = j.at("score").get<double>();
            out.push_back(d);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV / SVG output
// ---------------------------------------------------------------------------

void save_pr_csv(const PrCurve& curve, const fs::path& path) {
    std::string s = "label,threshold,precision,recall\n";
    for (const ClassPr& c : curve.classes)
        for (const PrPoint& p : c.points)
            s += c.label + "," + num(p.threshold) + "," + num(p.precision) + "," + num(p.recall) +
                 "\n";
    write_text(path, s);
}

void save_ap_csv(const PrCurve& curve, const fs::path& path) {
    std::string s = "label,average_precision,num_ground_truth\n";
    int total = 0;
    for (const ClassPr& c : curve.classes) {
        s += c.label + "," + num(c.average_precision) + "," + std::to_string(c.num_ground_truth) +
             "\n";
        total += c.num_ground_truth;
    }
    s += "mAP," + num(curve.mean_average_precision) + "," + std::to_string(total) + "\n";
    write_text(path, s);
}

void save_recall_csv(const std::vector<RecallRow>& table, const fs::path& path) {
    std::string s = "iou_thresh,recall,mean_proposals_per_frame\n";
    for (const RecallRow& r : table)
        s += num(r.iou_thresh) + "," + num(r.recall) + "," + num(r.mean_proposals_per_frame) + "\n";
    write_text(path, s);
}

namespace {

constexpr const char* kPalette[6] = {"#c0392b", "#2e6da4", "#27843b",
                                     "#b8860b", "#7d3c98", "#555555"};

// Shared 640x480 plot frame with a unit-square plot area.
struct SvgPlot {
    std::string body;
    double x0 = 64, y0 = 424, w = 544, h = 384; // plot area; SVG y grows downward

    double px(double x) const { return x0 + x * w; }
    double py(double y) const { return y0 - y * h; }

    SvgPlot(const std::string& xlabel, const std::string& ylabel) {
        body += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
                "viewBox=\"0 0 640 480\" font-family=\"sans-serif\" font-size=\"13\">\n";
        body += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            double f = i / 4.0;
            body += "<line x1=\"" + num2(px(f)) + "\" y1=\"" + num2(py(0)) + "\" x2=\"" +
                    num2(px(f)) + "\" y2=\"" + num2(py(1)) + "\" stroke=\"#ddd\"/>\n";
            body += "<line x1=\"" + num2(px(0)) + "\" y1=\"" + num2(py(f)) + "\" x2=\"" +
                    num2(px(1)) + "\" y2=\"" + num2(py(f)) + "\" stroke=\"#ddd\"/>\n";
            body += "<text x=\"" + num2(px(f)) + "\" y=\"" + num2(py(0) + 18) +
                    "\" text-anchor=\"middle\">" + num2(f) + "</text>\n";
            body += "<text x=\"" + num2(px(0) - 8) + "\" y=\"" + num2(py(f) + 4) +
                    "\" text-anchor=\"end\">" + num2(f) + "</text>\n";
        }
        body += "<rect x=\"" + num2(x0) + "\" y=\"" + num2(y0 - h) + "\" width=\"" + num2(w) +
                "\" height=\"" + num2(h) + "\" fill=\"none\" stroke=\"#333\"/>\n";
        body += "<text x=\"" + num2(px(0.5)) + "\" y=\"470\" text-anchor=\"middle\">" + xlabel +
                "</text>\n";
        body += "<text x=\"18\" y=\"" + num2(py(0.5)) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
                num2(py(0.5)) + ")\">" + ylabel + "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
        if (pts.empty()) return;
        body += "<polyline fill=\"none\" stroke=\"";
        body += color;
        body += "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) body += num2(px(x)) + "," + num2(py(y)) + " ";
        body += "\"/>\n";
    }

    void legend(int slot, const std::string& text, const char* color) {
        double y = 36 + 18.0 * slot;
        body += "<rect x=\"76\" y=\"" + num2(y - 9) + "\" width=\"12\" height=\"12\" fill=\"";
        body += color;
        body += "\"/>\n<text x=\"94\" y=\"" + num2(y + 2) + "\">" + text + "</text>\n";
    }

    std::string finish() { return body + "</svg>\n"; }
};

} // namespace

void save_pr_svg(const PrCurve& curve, const fs::path& path) {
    SvgPlot plot("recall", "precision");
    for (std::size_t i = 0; i < curve.classes.size(); ++i) {
        const ClassPr& c = curve.classes[i];
        const char* color = kPalette[i % 6];
        std::vector<std::pair<double, double>> pts;
        for (const PrPoint& p : c.points) pts.emplace_back(p.recall, p.precision);
        plot.polyline(pts, color);
        char ap[32];
        std::snprintf(ap, sizeof(ap), "%.3f", c.average_precision);
        plot.legend(static_cast<int>(i), c.label + " (AP " + ap + ")", color);
    }
    char map_txt[48];
    std::snprintf(map_txt, sizeof(map_txt), "mAP %.3f", curve.mean_average_precision);
    plot.legend(static_cast<int>(curve.classes.size()), map_txt, "#000");
    write_text(path, plot.finish());
}

void save_recall_svg(const std::vector<RecallRow>& table, const fs::path& path) {
    SvgPlot plot("IoU threshold", "recall");
    std::vector<std::pair<double, double>> pts;
    for (const RecallRow& r : table) pts.emplace_back(r.iou_thresh, r.recall);
    plot.polyline(pts, kPalette[1]);
    if (!table.empty()) {
        char txt[64];
        std::snprintf(txt, sizeof(txt), "%.2f proposals/frame", table[0].mean_proposals_per_frame);
        plot.legend(0, txt, kPalette[1]);
    }
    write_text(path, plot.finish());
}

// ---------------------------------------------------------------------------
// Procedural textures and shading
// ---------------------------------------------------------------------------

namespace {

struct TextureDef {
    int family = 0;
    Vec3 color_a, color_b;
    double phase[3] = {0, 0, 0};
};

int texture_family(const std::string& label) {
    const auto& names = synthetic_class_set();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == label) return static_cast<int>(i);
    // Unknown labels still get a stable family so custom class lists render.
    std::uint64_t h = 1469598103934665603ull;
    for (char c : label) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    return static_cast<int>(h % names.size());
}

Vec3 jitter(Vec3 c, Rng& rng, double amp) {
    c.x = std::clamp(c.x + amp * rng.uniform(-1, 1), 0.0, 1.0);
    c.y = std::clamp(c.y + amp * rng.uniform(-1, 1), 0.0, 1.0);
    c.z = std::clamp(c.z + amp * rng.uniform(-1, 1), 0.0, 1.0);
    return c;
}

TextureDef make_texture(const std::string& label, std::uint64_t texture_seed) {
    static const Vec3 base[5][2] = {
        {{0.88, 0.16, 0.14}, {0.96, 0.93, 0.88}}, // checker: red on cream
        {{0.10, 0.58, 0.16}, {0.05, 0.13, 0.06}}, // stripes: green on near-black
        {{0.96, 0.80, 0.10}, {0.13, 0.22, 0.72}}, // dots: yellow on blue
        {{0.58, 0.10, 0.62}, {0.92, 0.86, 0.95}}, // waves: smooth purple ramp
        {{0.05, 0.72, 0.78}, {0.05, 0.10, 0.12}}, // rings: cyan on near-black
    };
    TextureDef def;
    def.family = texture_family(label);
    Rng rng(texture_seed ^ 0x5bf03635u);
    def.color_a = jitter(base[def.family][0], rng, 0.04);
    def.color_b = jitter(base[def.family][1], rng, 0.04);
    for (double& p : def.phase) p = rng.uniform(0, 6.283185307179586);
    return def;
}

double frac(double v) { return v - std::floor(v); }

Vec3 texture_color(const TextureDef& t, const Vec3& p) {
    switch (t.family) {
        case 0: { // fine 3-D checker
            const double h = 0.045;
            long long s = static_cast<long long>(std::floor(p.x / h + t.phase[0])) +
                          static_cast<long long>(std::floor(p.y / h + t.phase[1])) +
                          static_cast<long long>(std::floor(p.z / h + t.phase[2]));
            return (s & 1) ? t.color_b : t.color_a;
        }
        case 1: { // oriented stripes
            double s = std::sin(2 * M_PI * (p.x + 0.35 * p.y) / 0.05 + t.phase[0]);
            return s > 0 ? t.color_a : t.color_b;
        }
        case 2: { // polka dots on a cubic lattice
            const double h = 0.06;
            double dx = frac(p.x / h + t.phase[0]) - 0.5;
            double dy = frac(p.y / h + t.phase[1]) - 0.5;
            double dz = frac(p.z / h + t.phase[2]) - 0.5;
            return (dx * dx + dy * dy + dz * dz < 0.33 * 0.33) ? t.color_a : t.color_b;
        }
        case 3: { // smooth low-frequency waves
            double c = 0.5 + 0.5 * std::sin(2 * M_PI * (p.x + p.z) / 0.13 + t.phase[0]) *
                                 std::sin(2 * M_PI * p.y / 0.09 + t.phase[1]);
            return t.color_b + (t.color_a - t.color_b) * c;
        }
        default: { // concentric shells
            double s = std::sin(2 * M_PI * p.norm() / 0.042 + t.phase[0]);
            return s > 0 ? t.color_a : t.color_b;
        }
    }
}

Vec3 ground_color(double x, double z) {
    const double h = 0.25;
    long long s = static_cast<long long>(std::floor(x / h)) +
                  static_cast<long long>(std::floor(z / h));
    double g = (s & 1) ? 0.56 : 0.44;
    return {g, g, g};
}

const Vec3 kLightDir = Vec3{0.35, 1.0, 0.45}.normalized();
const Vec3 kSkyColor = {0.74, 0.79, 0.85};

Vec3 shade(const Vec3& albedo, const Vec3& normal) {
    double lambert = 0.35 + 0.65 * std::max(0.0, normal.dot(kLightDir));
    return albedo * lambert;
}

// ---------------------------------------------------------------------------
// Ray casting. Rays are given in the local frame of each primitive; direction
// vectors are unit length (rotations preserve that).
// ---------------------------------------------------------------------------

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 point;  // local
    Vec3 normal; // local, unit
};

constexpr double kRayEps = 1e-9;

bool hit_sphere(const Vec3& o, const Vec3& d, double r, RayHit& hit) {
    double b = o.dot(d);
    double c = o.dot(o) - r * r;
    double disc = b * b - c;
    if (disc < 0) return false;
    double t = -b - std::sqrt(disc);
    if (t <= kRayEps) return false;
    hit.t = t;
    hit.point = o + d * t;
    hit.normal = hit.point * (1.0 / r);
    return true;
}

bool hit_cuboid(const Vec3& o, const Vec3& d, const Vec3& h, RayHit& hit) {
    const double od[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double hh[3] = {h.x, h.y, h.z};
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis = -1;
    double sign = 0;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dd[i]) < 1e-13) {
            if (std::abs(od[i]) > hh[i]) return false;
            continue;
        }
        double t1 = (-hh[i] - od[i]) / dd[i];
        double t2 = (hh[i] - od[i]) / dd[i];
        double entry_sign = dd[i] > 0 ? -1.0 : 1.0;
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > tmin) {
            tmin = t1;
            axis = i;
            sign = entry_sign;
        }
        tmax = std::min(tmax, t2);
    }
    if (tmax < tmin || tmin <= kRayEps || axis < 0) return false;
    hit.t = tmin;
    hit.point = o + d * tmin;
    hit.normal = {axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
    return true;
}

bool hit_cylinder(const Vec3& o, const Vec3& d, double r, double hh, RayHit& hit) {
    bool found = false;
    double a = d.x * d.x + d.z * d.z;
    if (a > 1e-14) {
        double b = o.x * d.x + o.z * d.z;
        double c = o.x * o.x + o.z * o.z - r * r;
        double disc = b * b - a * c;
        if (disc >= 0) {
            double t = (-b - std::sqrt(disc)) / a;
            if (t > kRayEps) {
                Vec3 p = o + d * t;
                if (std::abs(p.y) <= hh) {
                    hit.t = t;
                    hit.point = p;
                    hit.normal = Vec3{p.x, 0, p.z} * (1.0 / r);
                    found = true;
                }
            }
        }
    }
    if (std::abs(d.y) > 1e-13) {
        for (double s : {1.0, -1.0}) {
            double t = (s * hh - o.y) / d.y;
            if (t <= kRayEps || (found && t >= hit.t)) continue;
            Vec3 p = o + d * t;
            if (p.x * p.x + p.z * p.z <= r * r) {
                hit.t = t;
                hit.point = p;
                hit.normal = {0, s, 0};
                found = true;
            }
        }
    }
    return found;
}

bool hit_object(const ObjectPlacement& obj, const Vec3& o_local, const Vec3& d_local,
                RayHit& hit) {
    switch (obj.shape) {
        case ShapeKind::kCuboid: return hit_cuboid(o_local, d_local, obj.half_size, hit);
        case ShapeKind::kCylinder:
            return hit_cylinder(o_local, d_local, obj.half_size.x, obj.half_size.y, hit);
        default: return hit_sphere(o_local, d_local, obj.half_size.x, hit);
    }
}

ImageU8 render_view(const std::vector<ObjectPlacement>& objects,
                    const std::vector<TextureDef>& textures, const CameraIntrinsics& intr,
                    const Pose& cam_pose) {
    ImageU8 img(intr.width, intr.height);
    std::vector<Pose> inv;
    inv.reserve(objects.size());
    for (const ObjectPlacement& obj : objects) inv.push_back(obj.pose.inverse());
    const Vec3 origin = cam_pose.t;

    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            Vec3 dir_cam{(x + 0.5 - intr.cx) / intr.fx, (y + 0.5 - intr.cy) / intr.fy, 1.0};
            Vec3 d = cam_pose.q.rotate(dir_cam.normalized());

            double best_t = std::numeric_limits<double>::infinity();
            Vec3 color = kSkyColor;
            for (std::size_t i = 0; i < objects.size(); ++i) {
                RayHit hit;
                Vec3 ol = inv[i].apply(origin);
                Vec3 dl = inv[i].q.rotate(d);
                if (!hit_object(objects[i], ol, dl, hit) || hit.t >= best_t) continue;
                best_t = hit.t;
                color = shade(texture_color(textures[i], hit.point),
                              objects[i].pose.q.rotate(hit.normal));
            }
            if (d.y < -1e-12 && origin.y > 0) {
                double t = -origin.y / d.y;
                if (t > kRayEps && t < best_t) {
                    Vec3 p = origin + d * t;
                    color = shade(ground_color(p.x, p.z), {0, 1, 0});
                }
            }

            std::uint8_t* px = img.pixel(x, y);
            px[0] = static_cast<std::uint8_t>(std::lround(std::clamp(color.x, 0.0, 1.0) * 255.0));
            px[1] = static_cast<std::uint8_t>(std::lround(std::clamp(color.y, 0.0, 1.0) * 255.0));
            px[2] = static_cast<std::uint8_t>(std::lround(std::clamp(color.z, 0.0, 1.0) * 255.0));
        }
    }
    return img;
}

} // namespace

// ---------------------------------------------------------------------------
// Surface sampling and scene generation
// ---------------------------------------------------------------------------

const std::vector<std::string>& synthetic_class_set() {
    static const std::vector<std::string> names = {"checker", "stripes", "dots", "waves", "rings"};
    return names;
}

std::vector<Vec3> surface_samples(const ObjectPlacement& obj, int approx_count) {
    if (approx_count < 8) throw std::invalid_argument("surface_samples: approx_count too small");
    std::vector<Vec3> local;
    const Vec3 h = obj.half_size;
    switch (obj.shape) {
        case ShapeKind::kCuboid: {
            // Projection is fractional-linear along any segment, so box extremes
            // sit at corners; the corners are therefore sampled exactly.
            for (int sx : {-1, 1})
                for (int sy : {-1, 1})
                    for (int sz : {-1, 1}) local.push_back({sx * h.x, sy * h.y, sz * h.z});
            int m = std::max(2, approx_count / 24);
            for (int i = 1; i < m; ++i) {
                double f = -1.0 + 2.0 * i / m;
                for (int sa : {-1, 1})
                    for (int sb : {-1, 1}) {
                        local.push_back({f * h.x, sa * h.y, sb * h.z});
                        local.push_back({sa * h.x, f * h.y, sb * h.z});
                        local.push_back({sa * h.x, sb * h.y, f * h.z});
                    }
            }
            int g = std::max(2, static_cast<int>(std::lround(std::sqrt(approx_count / 12.0))));
            for (int i = 1; i < g; ++i)
                for (int j = 1; j < g; ++j) {
                    double a = -1.0 + 2.0 * i / g, b = -1.0 + 2.0 * j / g;
                    for (int s : {-1, 1}) {
                        local.push_back({s * h.x, a * h.y, b * h.z});
                        local.push_back({a * h.x, s * h.y, b * h.z});
                        local.push_back({a * h.x, b * h.y, s * h.z});
                    }
                }
            break;
        }
        case ShapeKind::kCylinder: {
            // Extremes of the projected cylinder lie on the two rim circles,
            // so the rims carry most of the budget.
            int nr = std::max(96, approx_count / 3);
            for (int i = 0; i < nr; ++i) {
                double ang = 2 * M_PI * i / nr;
                double cx = h.x * std::cos(ang), cz = h.x * std::sin(ang);
                local.push_back({cx, h.y, cz});
                local.push_back({cx, -h.y, cz});
            }
            for (int i = 0; i < 12; ++i) {
                double ang = 2 * M_PI * i / 12;
                double cx = h.x * std::cos(ang), cz = h.x * std::sin(ang);
                for (int j = 1; j < 6; ++j) {
                    double y = -h.y + 2 * h.y * j / 6;
                    local.push_back({cx, y, cz});
                }
            }
            break;
        }
        default: { // sphere: Fibonacci lattice
            int n = approx_count;
            const double golden = M_PI * (3.0 - std::sqrt(5.0));
            for (int i = 0; i < n; ++i) {
                double z = 1.0 - 2.0 * (i + 0.5) / n;
                double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                double ang = golden * i;
                local.push_back({h.x * r * std::cos(ang), h.x * z, h.x * r * std::sin(ang)});
            }
            break;
        }
    }
    std::vector<Vec3> world;
    world.reserve(local.size());
    for (const Vec3& p : local) world.push_back(obj.pose.apply(p));
    return world;
}

namespace {

double horizontal_radius(const ObjectPlacement& obj) {
    if (obj.shape == ShapeKind::kCuboid) return std::hypot(obj.half_size.x, obj.half_size.z);
    return obj.half_size.x;
}

ObjectPlacement random_shape(const std::string& label, Rng& rng) {
    ObjectPlacement obj;
    obj.label = label;
    obj.shape = static_cast<ShapeKind>(rng.uniform_int(3));
    switch (obj.shape) {
        case ShapeKind::kCuboid:
            obj.half_size = {rng.uniform(0.07, 0.13), rng.uniform(0.07, 0.13),
                             rng.uniform(0.07, 0.13)};
            break;
        case ShapeKind::kCylinder: {
            double r = rng.uniform(0.06, 0.11);
            obj.half_size = {r, rng.uniform(0.08, 0.15), r};
            break;
        }
        default: {
            double r = rng.uniform(0.07, 0.12);
            obj.half_size = {r, r, r};
            break;
        }
    }
    obj.texture_seed = rng.uniform_int(1ull << 62);
    return obj;
}

double resting_height(const ObjectPlacement& obj) { return obj.half_size.y; }

Vec3 random_edge_point(const ObjectPlacement& obj, Rng& rng) {
    const Vec3 h = obj.half_size;
    switch (obj.shape) {
        case ShapeKind::kCuboid: {
            int edge = static_cast<int>(rng.uniform_int(12));
            int axis = edge / 4;       // axis the edge runs along
            int corner = edge % 4;     // which of the four parallel edges
            double f = rng.uniform(-1, 1);
            double sa = (corner & 1) ? 1.0 : -1.0;
            double sb = (corner & 2) ? 1.0 : -1.0;
            if (axis == 0) return {f * h.x, sa * h.y, sb * h.z};
            if (axis == 1) return {sa * h.x, f * h.y, sb * h.z};
            return {sa * h.x, sb * h.y, f * h.z};
        }
        case ShapeKind::kCylinder: {
            double ang = rng.uniform(0, 2 * M_PI);
            double cx = h.x * std::cos(ang), cz = h.x * std::sin(ang);
            if (rng.uniform() < 0.5) {
                double y = rng.uniform() < 0.5 ? h.y : -h.y;
                return {cx, y, cz}; // rim
            }
            return {cx, rng.uniform(-h.y, h.y), cz}; // textured side
        }
        default: {
            Vec3 d{rng.gaussian(), rng.gaussian(), rng.gaussian()};
            double n = d.norm();
            if (n < 1e-9) d = {1, 0, 0}, n = 1;
            return d * (h.x / n);
        }
    }
}

nlohmann::json pose_json(const Pose& p) {
    return {{"quat", {p.q.w, p.q.x, p.q.y, p.q.z}}, {"position", {p.t.x, p.t.y, p.t.z}}};
}

} // namespace

SyntheticScene generate_scene(const SceneSpec& spec_in, const fs::path& out_dir) {
    SceneSpec spec = spec_in;
    if (spec.classes.empty()) spec.classes = synthetic_class_set();
    if (spec.num_objects < 1) throw std::invalid_argument("generate_scene: num_objects must be >= 1");
    if (spec.num_frames < 3) throw std::invalid_argument("generate_scene: num_frames must be >= 3");
    if (spec.width < 32 || spec.height < 32)
        throw std::invalid_argument("generate_scene: frame size must be at least 32x32");
    if (spec.points_per_object < 50)
        throw std::invalid_argument("generate_scene: points_per_object must be >= 50");
    if (spec.clutter_fraction < 0)
        throw std::invalid_argument("generate_scene: clutter_fraction must be >= 0");
    if (spec.position_noise < 0)
        throw std::invalid_argument("generate_scene: position_noise must be >= 0");
    for (const std::string& c : spec.classes)
        if (c.empty() || c == kBackgroundLabel)
            throw std::invalid_argument("generate_scene: invalid class label");

    Rng rng(spec.seed);
    SyntheticScene out;
    out.spec = spec;

    // Place objects in a disk with pairwise clearance so clusters separate.
    for (int i = 0; i < spec.num_objects; ++i) {
        ObjectPlacement obj = random_shape(spec.classes[i % spec.classes.size()], rng);
        double cr = horizontal_radius(obj);
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
            double x = rng.uniform(-0.75, 0.75);
            double z = rng.uniform(-0.75, 0.75);
            if (std::hypot(x, z) > 0.78) continue;
            bool clear = true;
            for (const ObjectPlacement& other : out.placements) {
                double need = cr + horizontal_radius(other) + 0.12;
                if (std::hypot(x - other.pose.t.x, z - other.pose.t.z) < need) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
            double yaw = rng.uniform(0, 2 * M_PI);
            obj.pose = Pose(Pose::quat_from_axis_angle({0, 1, 0}, yaw),
                            {x, resting_height(obj), z});
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("generate_scene: could not place object " +
                                     std::to_string(i) + "; reduce num_objects");
        out.placements.push_back(std::move(obj));
    }

    std::vector<TextureDef> textures;
    for (const ObjectPlacement& obj : out.placements)
        textures.push_back(make_texture(obj.label, obj.texture_seed));

    Scene& scene = out.scene;
    scene.root = out_dir;
    scene.intrinsics = CameraIntrinsics(0.95 * spec.width, 0.95 * spec.width, spec.width / 2.0,
                                        spec.height / 2.0, spec.width, spec.height);

    const Vec3 target{0, 0.16, 0};
    for (int f = 0; f < spec.num_frames; ++f) {
        double ang = 2 * M_PI * f / spec.num_frames;
        Vec3 eye{2.0 * std::sin(ang), 1.15, 2.0 * std::cos(ang)};
        FrameRecord rec;
        rec.frame_id = f;
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.png", f);
        rec.image_path = out_dir / "images" / name;
        rec.pose = look_at(eye, target);
        scene.frames.push_back(rec);
    }

    // Ground truth: enclosing box of densely projected surface samples,
    // clamped to the frame. Slivers thinner than 2 px are not annotated.
    const CameraIntrinsics& K = scene.intrinsics;
    for (std::size_t oi = 0; oi < out.placements.size(); ++oi) {
        std::vector<Vec3> samples = surface_samples(out.placements[oi], 1200);
        for (const FrameRecord& rec : scene.frames) {
            Pose w2c = rec.pose.inverse();
            std::vector<Vec2> px;
            px.reserve(samples.size());
            for (const Vec3& s : samples) {
                Vec3 pc = w2c.apply(s);
                if (pc.z <= 1e-9) continue;
                px.push_back({K.cx + K.fx * pc.x / pc.z, K.cy + K.fy * pc.y / pc.z});
            }
            if (px.size() < samples.size() / 2) continue;
            BoundingBox box = enclosing_box(px);
            box.x_min = std::clamp(box.x_min, 0.0, static_cast<double>(K.width));
            box.x_max = std::clamp(box.x_max, 0.0, static_cast<double>(K.width));
            box.y_min = std::clamp(box.y_min, 0.0, static_cast<double>(K.height));
            box.y_max = std::clamp(box.y_max, 0.0, static_cast<double>(K.height));
            if (box.width() < 2.0 || box.height() < 2.0) continue;
            scene.annotations.push_back(
                {rec.frame_id, box, out.placements[oi].label, static_cast<int>(oi)});
        }
    }
    for (std::size_t oi = 0; oi < out.placements.size(); ++oi) {
        std::set<int> frames_seen;
        for (const Annotation& a : scene.annotations)
            if (a.object_id == static_cast<int>(oi)) frames_seen.insert(a.frame_id);
        if (frames_seen.size() < 3)
            throw std::logic_error("generate_scene: object " + std::to_string(oi) +
                                   " visible in fewer than 3 frames");
    }

    // Cloud: random edge/surface samples colored by the local texture, plus
    // uniform clutter. The ground plane contributes no points.
    for (std::size_t oi = 0; oi < out.placements.size(); ++oi) {
        const ObjectPlacement& obj = out.placements[oi];
        for (int i = 0; i < spec.points_per_object; ++i) {
            Vec3 local = random_edge_point(obj, rng);
            Vec3 world = obj.pose.apply(local);
            Vec3 c = texture_color(textures[oi], local) * 0.85;
            SemiDenseMap::Point pt;
            pt.x = world.x + spec.position_noise * rng.gaussian();
            pt.y = world.y + spec.position_noise * rng.gaussian();
            pt.z = world.z + spec.position_noise * rng.gaussian();
            pt.r = static_cast<float>(std::clamp(c.x, 0.0, 1.0));
            pt.g = static_cast<float>(std::clamp(c.y, 0.0, 1.0));
            pt.b = static_cast<float>(std::clamp(c.z, 0.0, 1.0));
            scene.map.points.push_back(pt);
        }
    }
    int clutter = static_cast<int>(
        std::lround(spec.clutter_fraction * spec.num_objects * spec.points_per_object));
    for (int i = 0; i < clutter; ++i) {
        SemiDenseMap::Point pt;
        pt.x = rng.uniform(-1.1, 1.1);
        pt.y = rng.uniform(0.02, 0.62);
        pt.z = rng.uniform(-1.1, 1.1);
        pt.r = static_cast<float>(rng.uniform());
        pt.g = static_cast<float>(rng.uniform());
        pt.b = static_cast<float>(rng.uniform());
        scene.map.points.push_back(pt);
    }

    fs::create_directories(out_dir / "images");
    save_cloud_ply(scene.map, out_dir / "cloud.ply");
    save_trajectory(scene.frames, out_dir / "trajectory.txt");
    save_intrinsics(scene.intrinsics, out_dir / "intrinsics.txt");
    save_annotations(scene.annotations, out_dir / "annotations.jsonl");
    for (const FrameRecord& rec : scene.frames) {
        Pose cam = rec.pose;
        save_image(render_view(out.placements, textures, K, cam), rec.image_path);
    }

    nlohmann::json manifest;
    manifest["seed"] = spec.seed;
    manifest["classes"] = spec.classes;
    manifest["num_frames"] = spec.num_frames;
    manifest["width"] = spec.width;
    manifest["height"] = spec.height;
    manifest["points_per_object"] = spec.points_per_object;
    manifest["clutter_fraction"] = spec.clutter_fraction;
    manifest["position_noise"] = spec.position_noise;
    manifest["objects"] = nlohmann::json::array();
    static const char* kShapeNames[3] = {"cuboid", "cylinder", "sphere"};
    for (const ObjectPlacement& obj : out.placements) {
        nlohmann::json j;
        j["shape"] = kShapeNames[static_cast<int>(obj.shape)];
        j["label"] = obj.label;
        j["pose"] = pose_json(obj.pose);
        j["half_size"] = {obj.half_size.x, obj.half_size.y, obj.half_size.z};
        j["texture_seed"] = obj.texture_seed;
        manifest["objects"].push_back(j);
    }
    write_text(out_dir / "scene.json", manifest.dump(2) + "\n");

    return out;
}

ImageU8 render_crop(const std::string& label, int size, Rng& rng) {
    if (size < 16) throw std::invalid_argument("render_crop: size must be >= 16");
    if (label.empty()) throw std::invalid_argument("render_crop: empty label");
    CameraIntrinsics intr(1.2 * size, 1.2 * size, size / 2.0, size / 2.0, size, size);

    if (label == kBackgroundLabel) {
        Vec3 eye{rng.uniform(-0.5, 0.5), rng.uniform(0.55, 1.3), rng.uniform(-0.5, 0.5)};
        double ang = rng.uniform(0, 2 * M_PI);
        double reach = rng.uniform(0.4, 1.0);
        Vec3 target{eye.x + reach * std::sin(ang), 0.0, eye.z + reach * std::cos(ang)};
        return render_view({}, {}, intr, look_at(eye, target));
    }

    ObjectPlacement obj = random_shape(label, rng);
    double yaw = rng.uniform(0, 2 * M_PI);
    obj.pose = Pose(Pose::quat_from_axis_angle({0, 1, 0}, yaw), {0, resting_height(obj), 0});
    double cr = obj.half_size.norm();
    double dist = std::max(2.86 * cr, cr + 0.25);
    double elev = rng.uniform(0.25, 0.9);
    double azim = rng.uniform(0, 2 * M_PI);
    Vec3 center = obj.pose.t;
    Vec3 eye{center.x + dist * std::cos(elev) * std::sin(azim), center.y + dist * std::sin(elev),
             center.z + dist * std::cos(elev) * std::cos(azim)};
    return render_view({obj}, {make_texture(label, obj.texture_seed)}, intr,
                       look_at(eye, center));
}

} // namespace mvor
