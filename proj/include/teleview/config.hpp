// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/blend.hpp"
#include "teleview/splatting.hpp"
#include "teleview/stereo.hpp"
#include "teleview/synthetic.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace teleview {

using Json = nlohmann::json;

/// Bad or missing configuration. The message starts with the offending key
/// path or file name.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline Json loadJsonFile(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError(path.string() + ": file not found");
    }
    std::ifstream is(path);
    if (!is) {
        throw ConfigError(path.string() + ": cannot open");
    }
    try {
        return Json::parse(is);
    } catch (const Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Walks one JSON object, converting fields and remembering which keys were
/// read so leftovers can be reported as unknown.
class ConfigReader {
  public:
    ConfigReader(const Json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            fail("", "expected an object");
        }
    }

    bool has(const std::string &key) const { return j_.contains(key); }
    std::string keyPath(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string &key, const std::string &what) const {
        const std::string p = key.empty() ? path_ : keyPath(key);
        throw ConfigError((p.empty() ? std::string("<root>") : p) + ": " + what);
    }

    const Json &raw(const std::string &key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T> void read(const std::string &key, T &out) {
        if (!j_.contains(key)) {
            return;
        }
        seen_.insert(key);
        const Json &v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) {
                fail(key, "expected a boolean");
            }
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) {
                fail(key, "expected an integer");
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (v.get<std::int64_t>() < 0) {
                    fail(key, "expected a non-negative integer");
                }
            }
            out = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                fail(key, "expected a number");
            }
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) {
                fail(key, "expected a string");
            }
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, Vec3>) {
            out = vec(key, v, 3);
        } else if constexpr (std::is_same_v<T, Eigen::Vector3f>) {
            out = vec(key, v, 3).template cast<float>();
        } else if constexpr (std::is_same_v<T, Mat3>) {
            const Eigen::VectorXd m = vec(key, v, 9);
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    out(r, c) = m[r * 3 + c];
                }
            }
        } else {
            static_assert(sizeof(T) == 0, "unsupported config field type");
        }
    }

    template <class T> T require(const std::string &key) {
        if (!j_.contains(key)) {
            fail(key, "required key missing");
        }
        T out{};
        read(key, out);
        return out;
    }

    ConfigReader child(const std::string &key) {
        seen_.insert(key);
        return ConfigReader(j_.at(key), keyPath(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                fail(it.key(), "unknown key");
            }
        }
    }

  private:
    Eigen::VectorXd vec(const std::string &key, const Json &v, int n) const {
        if (!v.is_array() || static_cast<int>(v.size()) != n) {
            fail(key, "expected an array of " + std::to_string(n) + " numbers");
        }
        Eigen::VectorXd out(n);
        for (int i = 0; i < n; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) {
                fail(key, "expected an array of " + std::to_string(n) + " numbers");
            }
            out[i] = v[static_cast<std::size_t>(i)].get<double>();
        }
        return out;
    }

    const Json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Runs a validate() method and re-throws its message as a ConfigError for `path`.
template <class T> void validateAs(const T &value, const std::string &path) {
    try {
        value.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline Json toJson(const Vec3 &v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Json toJson(const Eigen::Vector3f &v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Json toJson(const Mat3 &m) {
    Json a = Json::array();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            a.push_back(m(r, c));
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Stage configs
// ---------------------------------------------------------------------------

inline MatcherConfig parseMatcherConfig(const Json &j, const std::string &path, MatcherConfig cfg = {}) {
    ConfigReader r(j, path);
    r.read("max_disparity", cfg.max_disparity);
    r.read("block_radius", cfg.block_radius);
    r.read("pyramid_levels", cfg.pyramid_levels);
    r.read("iterations", cfg.iterations);
    r.read("search_radius", cfg.search_radius);
    r.read("lr_threshold", cfg.lr_threshold);
    r.read("min_ncc", cfg.min_ncc);
    r.read("min_texture", cfg.min_texture);
    r.finish();
    validateAs(cfg, path);
    return cfg;
}

inline Json toJson(const MatcherConfig &c) {
    return {{"max_disparity", c.max_disparity}, {"block_radius", c.block_radius},
            {"pyramid_levels", c.pyramid_levels}, {"iterations", c.iterations},
            {"search_radius", c.search_radius}, {"lr_threshold", c.lr_threshold},
            {"min_ncc", c.min_ncc}, {"min_texture", c.min_texture}};
}

inline CascadeOptions parseCascadeOptions(const Json &j, const std::string &path, CascadeOptions o = {}) {
    ConfigReader r(j, path);
    r.read("use_cascade_init", o.use_cascade_init);
    r.read("zbuffer_radius", o.zbuffer_radius);
    r.read("hole_fill_radius", o.hole_fill_radius);
    r.read("min_disparity", o.min_disparity);
    r.finish();
    if (o.zbuffer_radius < 0 || o.hole_fill_radius < 0 || !(o.min_disparity > 0.0)) {
        r.fail("", "radii must be >= 0 and min_disparity > 0");
    }
    return o;
}

inline Json toJson(const CascadeOptions &o) {
    return {{"use_cascade_init", o.use_cascade_init}, {"zbuffer_radius", o.zbuffer_radius},
            {"hole_fill_radius", o.hole_fill_radius}, {"min_disparity", o.min_disparity}};
}

inline BlendConfig parseBlendConfig(const Json &j, const std::string &path, BlendConfig cfg = {}) {
    ConfigReader r(j, path);
    r.read("occlusion_threshold", cfg.occlusion_threshold);
    r.read("consistency_threshold", cfg.consistency_threshold);
    r.read("edge_gradient_threshold", cfg.edge_gradient_threshold);
    r.read("min_total_weight", cfg.min_total_weight);
    r.read("fuse_splat_radius", cfg.fuse_splat_radius);
    r.read("feather_pixels", cfg.feather_pixels);
    r.finish();
    validateAs(cfg, path);
    if (cfg.fuse_splat_radius < 0 || cfg.feather_pixels < 0) {
        r.fail("", "radii must be >= 0");
    }
    return cfg;
}

inline Json toJson(const BlendConfig &c) {
    return {{"occlusion_threshold", c.occlusion_threshold},
            {"consistency_threshold", c.consistency_threshold},
            {"edge_gradient_threshold", c.edge_gradient_threshold},
            {"min_total_weight", c.min_total_weight},
            {"fuse_splat_radius", c.fuse_splat_radius},
            {"feather_pixels", c.feather_pixels}};
}

inline SplatConfig parseSplatConfig(const Json &j, const std::string &path, SplatConfig cfg = {}) {
    ConfigReader r(j, path);
    r.read("feature_dim", cfg.feature_dim);
    r.read("kappa", cfg.kappa);
    r.read("resolution_factor", cfg.resolution_factor);
    r.read("min_alpha", cfg.min_alpha);
    r.read("silhouette_alpha", cfg.silhouette_alpha);
    r.finish();
    validateAs(cfg, path);
    return cfg;
}

inline Json toJson(const SplatConfig &c) {
    return {{"feature_dim", c.feature_dim}, {"kappa", c.kappa},
            {"resolution_factor", c.resolution_factor}, {"min_alpha", c.min_alpha},
            {"silhouette_alpha", c.silhouette_alpha}};
}

// ---------------------------------------------------------------------------
// Cameras and rigs
// ---------------------------------------------------------------------------

inline Json toJson(const CameraModel &c) {
    return {{"fx", c.fx()}, {"fy", c.fy()}, {"cx", c.cx()}, {"cy", c.cy()},
            {"rotation", toJson(c.rotation())}, {"translation", toJson(c.translation())},
            {"width", c.width()}, {"height", c.height()}};
}

inline CameraModel parseCamera(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    const auto fx = r.require<double>("fx");
    double fy = fx;
    r.read("fy", fy);
    const auto width = r.require<int>("width");
    const auto height = r.require<int>("height");
    double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    r.read("cx", cx);
    r.read("cy", cy);
    Mat3 rot = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    if (r.has("center") || r.has("look_at")) {
        const auto center = r.require<Vec3>("center");
        if (r.has("look_at")) {
            const auto target = r.require<Vec3>("look_at");
            Vec3 up = Vec3::UnitY();
            r.read("up", up);
            r.finish();
            try {
                return CameraModel::lookAt(center, target, up, fx, fy, cx, cy, width, height);
            } catch (const std::invalid_argument &e) {
                r.fail("", e.what());
            }
        }
        r.read("rotation", rot);
        t = -rot * center;
    } else {
        r.read("rotation", rot);
        r.read("translation", t);
    }
    r.finish();
    try {
        return CameraModel(fx, fy, cx, cy, rot, t, width, height);
    } catch (const std::invalid_argument &e) {
        r.fail("", e.what());
    }
}

inline RigOptions parseRigOptions(ConfigReader &r, RigOptions o = {}) {
    r.read("width", o.width);
    r.read("height", o.height);
    r.read("focal_factor", o.focal_factor);
    r.read("upper_baseline", o.upper_baseline);
    r.read("lower_baseline", o.lower_baseline);
    r.read("upper_height", o.upper_height);
    r.read("lower_height", o.lower_height);
    r.read("look_target", o.look_target);
    return o;
}

/// Either the parametric form (width, height, baselines, ...) or an explicit
/// "cameras" array of four cameras, plus an optional "display" block.
inline RigSpec parseRig(const Json &j, const std::string &path, const RigOptions &defaults = {}) {
    ConfigReader r(j, path);
    RigSpec rig;
    try {
        if (r.has("cameras")) {
            const Json &cams = r.raw("cameras");
            if (!cams.is_array()) {
                r.fail("cameras", "expected an array");
            }
            for (std::size_t i = 0; i < cams.size(); ++i) {
                rig.cameras.push_back(parseCamera(cams[i], r.keyPath("cameras") + "[" + std::to_string(i) + "]"));
            }
        } else {
            rig = makeRig(parseRigOptions(r, defaults));
        }
        if (r.has("display")) {
            ConfigReader d = r.child("display");
            d.read("center", rig.display.center);
            d.read("normal", rig.display.normal);
            d.read("width_m", rig.display.width_m);
            d.read("height_m", rig.display.height_m);
            d.finish();
        }
        r.finish();
        rig.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError((path.empty() ? std::string("rig") : path) + ": " + e.what());
    }
    return rig;
}

inline Json toJson(const RigSpec &rig) {
    Json cams = Json::array();
    for (const CameraModel &c : rig.cameras) {
        cams.push_back(toJson(c));
    }
    return {{"cameras", cams},
            {"display",
             {{"center", toJson(rig.display.center)}, {"normal", toJson(rig.display.normal)},
              {"width_m", rig.display.width_m}, {"height_m", rig.display.height_m}}}};
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

inline Pattern parsePattern(const std::string &s, const ConfigReader &r) {
    if (s == "constant") return Pattern::Constant;
    if (s == "checker") return Pattern::Checker;
    if (s == "stripes") return Pattern::Stripes;
    if (s == "noise") return Pattern::Noise;
    r.fail("pattern", "unknown pattern '" + s + "'");
}

inline const char *patternName(Pattern p) {
    switch (p) {
    case Pattern::Constant: return "constant";
    case Pattern::Checker: return "checker";
    case Pattern::Stripes: return "stripes";
    case Pattern::Noise: return "noise";
    }
    return "noise";
}

inline Material parseMaterial(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    Material m;
    if (r.has("pattern")) {
        m.pattern = parsePattern(r.require<std::string>("pattern"), r);
    }
    r.read("color_a", m.color_a);
    r.read("color_b", m.color_b);
    r.read("scale", m.scale);
    r.read("seed", m.seed);
    r.read("specular", m.specular);
    r.read("shininess", m.shininess);
    r.finish();
    if (!(m.scale > 0.0)) {
        r.fail("scale", "must be > 0");
    }
    return m;
}

inline Json toJson(const Material &m) {
    return {{"pattern", patternName(m.pattern)}, {"color_a", toJson(m.color_a)},
            {"color_b", toJson(m.color_b)}, {"scale", m.scale}, {"seed", m.seed},
            {"specular", m.specular}, {"shininess", m.shininess}};
}

inline SceneObject parseSceneObject(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    const auto type = r.require<std::string>("type");
    SceneObject obj;
    if (type == "plane") {
        PlanePrimitive p;
        r.read("center", p.center);
        r.read("normal", p.normal);
        r.read("u_axis", p.u_axis);
        r.read("half_u", p.half_u);
        r.read("half_v", p.half_v);
        if (p.normal.norm() == 0.0 || p.u_axis.norm() == 0.0) {
            r.fail("normal", "plane axes must be nonzero");
        }
        p.normal.normalize();
        p.u_axis = (p.u_axis - p.u_axis.dot(p.normal) * p.normal).normalized();
        obj.shape = p;
    } else if (type == "sphere") {
        SpherePrimitive s;
        r.read("center", s.center);
        r.read("radius", s.radius);
        if (!(s.radius > 0.0)) {
            r.fail("radius", "must be > 0");
        }
        obj.shape = s;
    } else if (type == "box") {
        BoxPrimitive b;
        r.read("center", b.center);
        r.read("axes", b.axes);
        r.read("half_extent", b.half_extent);
        obj.shape = b;
    } else if (type == "mesh") {
        MeshPrimitive m;
        const Json &verts = r.raw("vertices");
        const Json &tris = r.raw("triangles");
        if (!verts.is_array() || !tris.is_array()) {
            r.fail("vertices", "mesh needs vertex and triangle arrays");
        }
        for (const Json &v : verts) {
            if (!v.is_array() || v.size() != 3) {
                r.fail("vertices", "each vertex needs 3 numbers");
            }
            m.vertices.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
        }
        for (const Json &t : tris) {
            if (!t.is_array() || t.size() != 3) {
                r.fail("triangles", "each triangle needs 3 indices");
            }
            std::array<int, 3> tri{t[0].get<int>(), t[1].get<int>(), t[2].get<int>()};
            for (int k : tri) {
                if (k < 0 || k >= static_cast<int>(m.vertices.size())) {
                    r.fail("triangles", "vertex index out of range");
                }
            }
            m.triangles.push_back(tri);
        }
        obj.shape = std::move(m);
    } else {
        r.fail("type", "unknown primitive type '" + type + "'");
    }
    if (r.has("material")) {
        obj.material = parseMaterial(r.raw("material"), r.keyPath("material"));
    }
    r.read("foreground", obj.foreground);
    r.finish();
    return obj;
}

inline Json toJson(const SceneObject &o) {
    Json j = std::visit(
        [](const auto &s) -> Json {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, PlanePrimitive>) {
                return {{"type", "plane"}, {"center", toJson(s.center)}, {"normal", toJson(s.normal)},
                        {"u_axis", toJson(s.u_axis)}, {"half_u", s.half_u}, {"half_v", s.half_v}};
            } else if constexpr (std::is_same_v<S, SpherePrimitive>) {
                return {{"type", "sphere"}, {"center", toJson(s.center)}, {"radius", s.radius}};
            } else if constexpr (std::is_same_v<S, BoxPrimitive>) {
                return {{"type", "box"}, {"center", toJson(s.center)}, {"axes", toJson(s.axes)},
                        {"half_extent", toJson(s.half_extent)}};
            } else {
                Json v = Json::array(), t = Json::array();
                for (const Vec3 &p : s.vertices) v.push_back(toJson(p));
                for (const auto &tri : s.triangles) t.push_back(Json::array({tri[0], tri[1], tri[2]}));
                return {{"type", "mesh"}, {"vertices", v}, {"triangles", t}};
            }
        },
        o.shape);
    j["material"] = toJson(o.material);
    j["foreground"] = o.foreground;
    return j;
}

/// Scene from a preset ("plane", "sphere", "two_layer", "mannequin") or an
/// explicit "objects" list; "lighting" may override either.
inline SceneSpec parseScene(const Json &j, const std::string &path) {
    ConfigReader r(j, path);
    SceneSpec scene;
    if (r.has("preset")) {
        const auto preset = r.require<std::string>("preset");
        std::uint64_t seed = 1;
        r.read("seed", seed);
        if (preset == "plane") {
            double z = 1.25, hu = 0.3, hv = 0.3;
            r.read("depth", z);
            r.read("half_u", hu);
            r.read("half_v", hv);
            scene = makePlaneScene(z, seed, hu, hv);
        } else if (preset == "sphere") {
            Vec3 c(0.0, 0.0, 1.25);
            double radius = 0.2;
            r.read("center", c);
            r.read("radius", radius);
            scene = makeSphereScene(c, radius, seed);
        } else if (preset == "two_layer") {
            double z = 1.15, gap = 0.15;
            r.read("depth", z);
            r.read("gap", gap);
            scene = makeTwoLayerScene(z, gap, seed);
        } else if (preset == "mannequin") {
            MannequinOptions mo;
            r.read("background", mo.background);
            r.read("striped_shirt", mo.striped_shirt);
            r.read("specular_head", mo.specular_head);
            scene = makeMannequinScene(seed, mo);
        } else {
            r.fail("preset", "unknown preset '" + preset + "'");
        }
    } else if (r.has("objects")) {
        const Json &objs = r.raw("objects");
        if (!objs.is_array()) {
            r.fail("objects", "expected an array");
        }
        for (std::size_t i = 0; i < objs.size(); ++i) {
            scene.objects.push_back(
                parseSceneObject(objs[i], r.keyPath("objects") + "[" + std::to_string(i) + "]"));
        }
    } else {
        r.fail("", "scene needs either 'preset' or 'objects'");
    }
    if (r.has("lighting")) {
        ConfigReader l = r.child("lighting");
        l.read("ambient", scene.lighting.ambient);
        l.read("direction", scene.lighting.direction);
        l.read("intensity", scene.lighting.intensity);
        l.finish();
        if (scene.lighting.direction.norm() == 0.0) {
            l.fail("direction", "must be nonzero");
        }
        scene.lighting.direction.normalize();
    }
    r.finish();
    return scene;
}

inline Json toJson(const SceneSpec &s) {
    Json objs = Json::array();
    for (const SceneObject &o : s.objects) {
        objs.push_back(toJson(o));
    }
    return {{"objects", objs},
            {"lighting",
             {{"ambient", s.lighting.ambient}, {"direction", toJson(s.lighting.direction)},
              {"intensity", s.lighting.intensity}}}};
}

/// Either an inline object or a string naming a JSON file, resolved against `base`.
inline Json resolveJsonRef(const Json &j, const std::filesystem::path &base, const std::string &path) {
    if (j.is_string()) {
        std::filesystem::path p = j.get<std::string>();
        if (p.is_relative()) {
            p = base / p;
        }
        if (!std::filesystem::exists(p)) {
            throw ConfigError(path + ": file not found: " + p.string());
        }
        return loadJsonFile(p);
    }
    if (!j.is_object()) {
        throw ConfigError(path + ": expected an object or a file path");
    }
    return j;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const void *data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string &s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t hashFile(const std::filesystem::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot hash missing file: " + p.string());
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
    }
    return h;
}

} // namespace teleview
