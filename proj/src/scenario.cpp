#include "contiservo/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace contiservo {

namespace {

std::string fmt_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string join(const std::string& base, const std::string& key)
{
    return base.empty() ? key : base + "." + key;
}

// Walks one YAML mapping, rejecting keys that were never asked for.
class MapReader {
public:
    MapReader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.IsMap())
            throw ScenarioError(path_.empty() ? "<root>" : path_, "expected a mapping");
    }

    bool has(const std::string& key)
    {
        known_.insert(key);
        return static_cast<bool>(node_[key]);
    }

    YAML::Node get(const std::string& key)
    {
        known_.insert(key);
        return node_[key];
    }

    std::string path(const std::string& key) const { return join(path_, key); }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        if (!has(key)) return;
        try {
            out = node_[key].as<T>();
        } catch (const YAML::Exception&) {
            throw ScenarioError(path(key), "has the wrong type");
        }
        if constexpr (std::is_floating_point_v<T>) {
            if (!std::isfinite(out)) throw ScenarioError(path(key), "must be finite");
        }
    }

    void read_deg(const std::string& key, double& radians)
    {
        double deg = rad_to_deg(radians);
        read(key, deg);
        radians = deg_to_rad(deg);
    }

    void finish() const
    {
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!known_.count(key)) throw ScenarioError(path(key), "unknown key");
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> known_;
};

void read_disturbance(MapReader& r, DisturbanceSpec& d)
{
    r.read_deg("rotation_phi_deg", d.rotation_phi);
    r.read("scale_s", d.scale_s);
    r.read("dead_zone", d.dead_zone);
    r.read_deg("drift_rate_deg", d.drift_rate);
    r.read("flow_noise_sigma", d.flow_noise_sigma);
    if (r.has("shear")) {
        const auto node = r.get("shear");
        if (node.IsNull()) {
            d.shear.reset();
        } else {
            MapReader sr(node, r.path("shear"));
            Shear sh;
            sr.read("sigma1", sh.sigma1);
            sr.read("sigma2", sh.sigma2);
            sr.read_deg("psi_deg", sh.psi);
            sr.finish();
            d.shear = sh;
        }
    }
}

void check(bool ok, const std::string& field, const std::string& what)
{
    if (!ok) throw ScenarioError(field, what);
}

}  // namespace

void Scenario::validate() const
{
    check(duration_steps > 0, "duration_steps", "must be > 0");
    const auto rethrow = [](const std::string& field, auto&& fn) {
        try {
            fn();
        } catch (const std::invalid_argument& e) {
            throw ScenarioError(field, e.what());
        }
    };
    rethrow("environment", [&] { disturbance.validate(); });
    rethrow("estimator", [&] { estimator.validate(); });
    rethrow("controller", [&] { controller.validate(); });
    rethrow("camera", [&] { camera.validate(); });
    rethrow("catheter", [&] { catheter.validate(); });
    if (flow_threshold) check(*flow_threshold >= 0.0, "estimator.flow_threshold", "must be >= 0");
    check(vision.feature_count >= 1, "vision.feature_count", "must be >= 1");
    check(vision.feature_spread_px >= 0.0, "vision.feature_spread_px", "must be >= 0");
    check(vision.blob_sigma > 0.0, "vision.blob_sigma", "must be > 0");
    check(vision.lk_window >= 3 && vision.lk_window % 2 == 1, "vision.lk_window",
          "must be odd and >= 3");
    check(initial_target_px.allFinite() && camera.contains(initial_target_px),
          "initial_target_px", "must lie inside the image");
}

void set_environment(Scenario& s, const std::string& name)
{
    s.disturbance = preset(name).disturbance;
    s.environment = name;
}

double effective_flow_threshold(const Scenario& s)
{
    if (s.flow_threshold) return *s.flow_threshold;
    return 2.0 * s.disturbance.flow_noise_sigma / std::sqrt(double(s.vision.feature_count));
}

EstimatorConfig effective_estimator(const Scenario& s)
{
    EstimatorConfig cfg = s.estimator;
    cfg.flow_threshold = effective_flow_threshold(s);
    return cfg;
}

Scenario parse_scenario(const std::string& yaml_text)
{
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ScenarioError("<root>", std::string("YAML parse error: ") + e.what());
    }
    MapReader r(root, "");
    int version = 0;
    if (!r.has("schema_version")) throw ScenarioError("schema_version", "missing");
    r.read("schema_version", version);
    if (version != kScenarioSchemaVersion)
        throw ScenarioError("schema_version", "unsupported version " + std::to_string(version) +
                                                  " (expected " +
                                                  std::to_string(kScenarioSchemaVersion) + ")");

    Scenario s;
    r.read("seed", s.seed);
    r.read("duration_steps", s.duration_steps);
    r.read("stop_on_outcome", s.stop_on_outcome);
    if (r.has("flow_source")) {
        std::string f;
        r.read("flow_source", f);
        try {
            s.flow_source = flow_source_from_string(f);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("flow_source", e.what());
        }
    }

    if (r.has("environment")) {
        const auto env = r.get("environment");
        if (env.IsScalar()) {
            try {
                set_environment(s, env.as<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ScenarioError("environment", e.what());
            }
        } else {
            MapReader er(env, "environment");
            if (er.has("preset")) {
                std::string name;
                er.read("preset", name);
                try {
                    set_environment(s, name);
                } catch (const std::invalid_argument& e) {
                    throw ScenarioError("environment.preset", e.what());
                }
            } else {
                s.environment = "custom";
                s.disturbance = DisturbanceSpec{};
            }
            const DisturbanceSpec before = s.disturbance;
            read_disturbance(er, s.disturbance);
            er.finish();
            const auto near = [](double a, double b) {
                return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a));
            };
            const bool changed = !near(before.rotation_phi, s.disturbance.rotation_phi) ||
                                 !near(before.scale_s, s.disturbance.scale_s) ||
                                 !near(before.dead_zone, s.disturbance.dead_zone) ||
                                 !near(before.drift_rate, s.disturbance.drift_rate) ||
                                 !near(before.flow_noise_sigma, s.disturbance.flow_noise_sigma);
            if (changed || s.disturbance.shear) s.environment = "custom";
            else s.disturbance = before;
        }
    }

    if (r.has("estimator")) {
        MapReader er(r.get("estimator"), "estimator");
        auto& e = s.estimator;
        if (er.has("mode")) {
            std::string m;
            er.read("mode", m);
            try {
                e.mode = filter_mode_from_string(m);
            } catch (const std::invalid_argument& ex) {
                throw ScenarioError("estimator.mode", ex.what());
            }
        }
        if (er.has("wrap_mode")) {
            std::string m;
            er.read("wrap_mode", m);
            try {
                e.wrap_mode = wrap_mode_from_string(m);
            } catch (const std::invalid_argument& ex) {
                throw ScenarioError("estimator.wrap_mode", ex.what());
            }
        }
        er.read("alpha", e.alpha);
        er.read("sigma_w", e.sigma_w);
        er.read("sigma_v", e.sigma_v);
        er.read("sigma_theta_0", e.sigma_theta_0);
        er.read_deg("theta_hat_0_deg", e.theta_hat_0);
        if (er.has("flow_threshold")) {
            const auto node = er.get("flow_threshold");
            if (node.IsScalar() && node.Scalar() == "auto") {
                s.flow_threshold.reset();
            } else {
                double v = 0.0;
                er.read("flow_threshold", v);
                s.flow_threshold = v;
            }
        }
        er.finish();
    }

    if (r.has("controller")) {
        MapReader cr(r.get("controller"), "controller");
        auto& c = s.controller;
        cr.read("kp", c.kp);
        cr.read("step_cap", c.step_cap);
        cr.read("damping", c.damping);
        cr.read("convergence_window", c.convergence_window);
        cr.read("convergence_radius_px", c.convergence_radius_px);
        cr.read("divergence_window", c.divergence_window);
        cr.read("divergence_factor", c.divergence_factor);
        if (cr.has("measure_against")) {
            std::string m;
            cr.read("measure_against", m);
            if (m == "intent") c.measure_against_intent = true;
            else if (m == "applied") c.measure_against_intent = false;
            else throw ScenarioError("controller.measure_against", "expected applied or intent");
        }
        cr.finish();
    }

    bool target_given = false;
    if (r.has("camera")) {
        MapReader cr(r.get("camera"), "camera");
        cr.read("width", s.camera.width);
        cr.read("height", s.camera.height);
        cr.read("focal_px", s.camera.focal_px);
        cr.read("frame_rate", s.camera.frame_rate);
        cr.finish();
    }
    if (r.has("catheter")) {
        MapReader cr(r.get("catheter"), "catheter");
        cr.read("segment_length", s.catheter.segment_length);
        cr.read("tendon_count", s.catheter.tendon_count);
        cr.read("tendon_radius", s.catheter.tendon_radius);
        cr.read("max_tendon_displacement", s.catheter.max_tendon_displacement);
        cr.finish();
    }
    if (r.has("vision")) {
        MapReader vr(r.get("vision"), "vision");
        vr.read("feature_count", s.vision.feature_count);
        vr.read("feature_spread_px", s.vision.feature_spread_px);
        vr.read("blob_sigma", s.vision.blob_sigma);
        vr.read("lk_window", s.vision.lk_window);
        vr.finish();
    }
    if (r.has("initial_target_px")) {
        const auto node = r.get("initial_target_px");
        if (!node.IsSequence() || node.size() != 2)
            throw ScenarioError("initial_target_px", "expected [x, y]");
        try {
            s.initial_target_px = {node[0].as<double>(), node[1].as<double>()};
        } catch (const YAML::Exception&) {
            throw ScenarioError("initial_target_px", "has the wrong type");
        }
        target_given = true;
    }
    r.finish();
    if (!target_given) s.initial_target_px = s.camera.center() + PixelVector(90.0, 110.0);

    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open scenario file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_scenario(ss.str());
}

std::string dump_scenario(const Scenario& s)
{
    std::ostringstream os;
    const auto& d = s.disturbance;
    const auto& e = s.estimator;
    const auto& c = s.controller;
    os << "schema_version: " << kScenarioSchemaVersion << "\n"
       << "seed: " << s.seed << "\n"
       << "duration_steps: " << s.duration_steps << "\n"
       << "stop_on_outcome: " << (s.stop_on_outcome ? "true" : "false") << "\n"
       << "flow_source: " << to_string(s.flow_source) << "\n"
       << "environment:\n";
    if (s.environment != "custom") os << "  preset: " << s.environment << "\n";
    os << "  rotation_phi_deg: " << fmt_double(rad_to_deg(d.rotation_phi)) << "\n"
       << "  scale_s: " << fmt_double(d.scale_s) << "\n"
       << "  dead_zone: " << fmt_double(d.dead_zone) << "\n"
       << "  drift_rate_deg: " << fmt_double(rad_to_deg(d.drift_rate)) << "\n"
       << "  flow_noise_sigma: " << fmt_double(d.flow_noise_sigma) << "\n";
    if (d.shear)
        os << "  shear: {sigma1: " << fmt_double(d.shear->sigma1)
           << ", sigma2: " << fmt_double(d.shear->sigma2)
           << ", psi_deg: " << fmt_double(rad_to_deg(d.shear->psi)) << "}\n";
    os << "estimator:\n"
       << "  mode: " << to_string(e.mode) << "\n"
       << "  alpha: " << fmt_double(e.alpha) << "\n"
       << "  sigma_w: " << fmt_double(e.sigma_w) << "\n"
       << "  sigma_v: " << fmt_double(e.sigma_v) << "\n"
       << "  sigma_theta_0: " << fmt_double(e.sigma_theta_0) << "\n"
       << "  theta_hat_0_deg: " << fmt_double(rad_to_deg(e.theta_hat_0)) << "\n"
       << "  flow_threshold: " << (s.flow_threshold ? fmt_double(*s.flow_threshold) : "auto")
       << "\n"
       << "  wrap_mode: " << to_string(e.wrap_mode) << "\n"
       << "controller:\n"
       << "  kp: " << fmt_double(c.kp) << "\n"
       << "  step_cap: " << fmt_double(c.step_cap) << "\n"
       << "  damping: " << fmt_double(c.damping) << "\n"
       << "  convergence_window: " << c.convergence_window << "\n"
       << "  convergence_radius_px: " << fmt_double(c.convergence_radius_px) << "\n"
       << "  divergence_window: " << c.divergence_window << "\n"
       << "  divergence_factor: " << fmt_double(c.divergence_factor) << "\n"
       << "  measure_against: " << (c.measure_against_intent ? "intent" : "applied") << "\n"
       << "camera:\n"
       << "  width: " << fmt_double(s.camera.width) << "\n"
       << "  height: " << fmt_double(s.camera.height) << "\n"
       << "  focal_px: " << fmt_double(s.camera.focal_px) << "\n"
       << "  frame_rate: " << fmt_double(s.camera.frame_rate) << "\n"
       << "catheter:\n"
       << "  segment_length: " << fmt_double(s.catheter.segment_length) << "\n"
       << "  tendon_count: " << s.catheter.tendon_count << "\n"
       << "  tendon_radius: " << fmt_double(s.catheter.tendon_radius) << "\n"
       << "  max_tendon_displacement: " << fmt_double(s.catheter.max_tendon_displacement) << "\n"
       << "vision:\n"
       << "  feature_count: " << s.vision.feature_count << "\n"
       << "  feature_spread_px: " << fmt_double(s.vision.feature_spread_px) << "\n"
       << "  blob_sigma: " << fmt_double(s.vision.blob_sigma) << "\n"
       << "  lk_window: " << s.vision.lk_window << "\n"
       << "initial_target_px: [" << fmt_double(s.initial_target_px.x()) << ", "
       << fmt_double(s.initial_target_px.y()) << "]\n";
    return os.str();
}

std::string scenario_hash(const Scenario& s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : dump_scenario(s)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

std::string to_string(FlowSource f)
{
    return f == FlowSource::synthetic ? "synthetic" : "lucas_kanade";
}

FlowSource flow_source_from_string(const std::string& s)
{
    if (s == "synthetic") return FlowSource::synthetic;
    if (s == "lucas_kanade" || s == "lk") return FlowSource::lucas_kanade;
    throw std::invalid_argument("unknown flow source '" + s + "' (expected synthetic or lk)");
}

}  // namespace contiservo
