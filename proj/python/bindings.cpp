#include "contiservo/harness.hpp"
#include "contiservo/teleop.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace contiservo;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

std::vector<PixelVector> to_points(const Points& m)
{
    std::vector<PixelVector> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m(i, 0), m(i, 1));
    return out;
}

Points from_points(const std::vector<PixelVector>& v)
{
    Points m(v.size(), 2);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
    return m;
}

Image to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a)
{
    if (a.ndim() != 2) throw std::invalid_argument("image must be a 2-D array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

py::array_t<double> from_image(const Image& img)
{
    py::array_t<double> out({img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

py::dict trial_dict(const TrialRecord& rec)
{
    const auto n = static_cast<py::ssize_t>(rec.rows.size());
    py::array_t<long> t(n);
    py::array_t<double> target({n, py::ssize_t(2)});
    py::array_t<double> err(n), theta(n), flow(n), V(n), dV(n), vdot(n), phi(n);
    py::array_t<bool> gate(n), stalled(n);
    for (py::ssize_t i = 0; i < n; ++i) {
        const TrialRow& r = rec.rows[i];
        t.mutable_at(i) = r.t;
        target.mutable_at(i, 0) = r.target_px.x();
        target.mutable_at(i, 1) = r.target_px.y();
        err.mutable_at(i) = r.error_norm_px;
        theta.mutable_at(i) = r.theta_hat;
        gate.mutable_at(i) = r.gate_open;
        flow.mutable_at(i) = r.flow_magnitude;
        V.mutable_at(i) = r.V;
        dV.mutable_at(i) = r.V_delta;
        vdot.mutable_at(i) = r.V_dot_analytic;
        phi.mutable_at(i) = r.phi_current;
        stalled.mutable_at(i) = r.stalled;
    }
    py::dict meta;
    meta["scenario_hash"] = rec.meta.scenario_hash;
    meta["seed"] = rec.meta.seed;
    meta["outcome"] = to_string(rec.meta.outcome);
    meta["steps_to_converge"] = rec.meta.steps_to_converge;
    meta["environment"] = rec.meta.environment;
    meta["alpha"] = rec.meta.alpha;

    py::dict d;
    d["t"] = t;
    d["target_px"] = target;
    d["error_norm_px"] = err;
    d["theta_hat"] = theta;
    d["gate_open"] = gate;
    d["flow_magnitude"] = flow;
    d["V"] = V;
    d["V_delta"] = dV;
    d["V_dot_analytic"] = vdot;
    d["phi_current"] = phi;
    d["stalled"] = stalled;
    d["meta"] = meta;
    d["csv"] = csv_text(rec);
    return d;
}

}  // namespace

PYBIND11_MODULE(_contiservo, m)
{
    m.doc() = "Orientation-adaptive visual servoing simulator";

    py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
    py::register_exception<RankDeficientError>(m, "RankDeficientError", PyExc_ArithmeticError);
    py::register_exception<MeasurementUndefined>(m, "MeasurementUndefined", PyExc_ValueError);
    py::register_exception<DegenerateFilterError>(m, "DegenerateFilterError", PyExc_ValueError);

    py::class_<Scenario>(m, "Scenario")
        .def(py::init<>())
        .def_readwrite("environment", &Scenario::environment)
        .def_readwrite("seed", &Scenario::seed)
        .def_readwrite("duration_steps", &Scenario::duration_steps)
        .def_readwrite("stop_on_outcome", &Scenario::stop_on_outcome)
        .def_readwrite("initial_target_px", &Scenario::initial_target_px)
        .def_property(
            "alpha", [](const Scenario& s) { return s.estimator.alpha; },
            [](Scenario& s, double a) { s.estimator.alpha = a; })
        .def_property(
            "rotation_phi", [](const Scenario& s) { return s.disturbance.rotation_phi; },
            [](Scenario& s, double v) {
                s.disturbance.rotation_phi = v;
                s.environment = "custom";
            })
        .def_property(
            "flow_noise_sigma", [](const Scenario& s) { return s.disturbance.flow_noise_sigma; },
            [](Scenario& s, double v) {
                s.disturbance.flow_noise_sigma = v;
                s.environment = "custom";
            })
        .def_property(
            "flow_source", [](const Scenario& s) { return to_string(s.flow_source); },
            [](Scenario& s, const std::string& v) { s.flow_source = flow_source_from_string(v); })
        .def("validate", &Scenario::validate)
        .def("set_environment", [](Scenario& s, const std::string& name) { set_environment(s, name); })
        .def("dump", [](const Scenario& s) { return dump_scenario(s); })
        .def("hash", [](const Scenario& s) { return scenario_hash(s); })
        .def("__repr__", [](const Scenario& s) {
            return "<Scenario " + s.environment + " alpha=" + std::to_string(s.estimator.alpha) + ">";
        });

    m.def("load_scenario", [](const std::filesystem::path& p) { return load_scenario(p); });
    m.def("parse_scenario", &parse_scenario);
    m.def("effective_flow_threshold", &effective_flow_threshold);

    m.def("run_trial", [](const Scenario& sc) {
        TrialRecord rec;
        {
            py::gil_scoped_release nogil;
            rec = run_trial(sc);
        }
        return trial_dict(rec);
    });
    m.def(
        "run_sweep",
        [](const Scenario& base, std::vector<std::string> envs, std::vector<double> alphas, int jobs) {
            SweepSpec spec;
            spec.base = base;
            spec.environments = std::move(envs);
            spec.alphas = std::move(alphas);
            spec.jobs = jobs;
            SweepResult res;
            {
                py::gil_scoped_release nogil;
                res = run_sweep(spec);
            }
            py::list summary;
            for (const auto& r : res.summary) {
                py::dict d;
                d["environment"] = r.environment;
                d["alpha"] = r.alpha;
                d["outcome"] = to_string(r.outcome);
                d["steps_to_converge"] = r.steps_to_converge;
                d["final_theta_hat"] = r.final_theta_hat;
                d["steady_state_variance"] = r.steady_state_variance;
                summary.append(d);
            }
            py::list trials;
            for (const auto& t : res.trials) trials.append(trial_dict(t));
            py::list failures;
            for (const auto& f : res.failures) failures.append(py::make_tuple(f.index, f.message));
            py::dict out;
            out["summary"] = summary;
            out["trials"] = trials;
            out["failures"] = failures;
            return out;
        },
        py::arg("base"), py::arg("envs") = std::vector<std::string>{"no_bend", "one_bend", "two_bend"},
        py::arg("alphas") = std::vector<double>{1.0, 0.95, 0.75, 0.50}, py::arg("jobs") = 1);

    m.def("wrap_angle", &wrap_angle);
    m.def("rotation", &rotation);
    m.def("derive_seed", &derive_seed);
    m.def("measure_angle", &measure_angle, py::arg("cmd"), py::arg("v"));
    m.def(
        "kalman_update",
        [](double theta_hat, double variance, double meas, double sigma_w, double sigma_v) {
            EstimatorConfig cfg;
            cfg.mode = FilterMode::kalman;
            cfg.sigma_w = sigma_w;
            cfg.sigma_v = sigma_v;
            const AngleEstimate e = kalman_update({theta_hat, variance, 0}, meas, cfg);
            return py::make_tuple(e.theta_hat, e.variance);
        },
        py::arg("theta_hat"), py::arg("variance"), py::arg("meas"), py::arg("sigma_w"),
        py::arg("sigma_v"));
    m.def(
        "steady_state_gain",
        [](double sigma_w, double sigma_v, double sigma_theta_0) {
            EstimatorConfig cfg;
            cfg.sigma_w = sigma_w;
            cfg.sigma_v = sigma_v;
            cfg.sigma_theta_0 = sigma_theta_0;
            return steady_state_gain(cfg);
        },
        py::arg("sigma_w"), py::arg("sigma_v"), py::arg("sigma_theta_0") = 1.0);
    m.def(
        "iir_update",
        [](double prev, double meas, double alpha, const std::string& wrap) {
            EstimatorConfig cfg;
            cfg.alpha = alpha;
            cfg.wrap_mode = wrap_mode_from_string(wrap);
            return iir_update(prev, meas, cfg);
        },
        py::arg("theta_hat"), py::arg("meas"), py::arg("alpha"), py::arg("wrap_mode") = "paper_mod");
    m.def("spectral_radius", &spectral_radius, py::arg("kp"), py::arg("scale"), py::arg("phi"));

    m.def(
        "model_jacobian",
        [](int tendon_count, double tendon_radius, double focal_px) {
            CatheterConfig c;
            c.tendon_count = tendon_count;
            c.tendon_radius = tendon_radius;
            CameraModel cam;
            cam.focal_px = focal_px;
            return model_jacobian(JointState::zero(tendon_count), c, cam).m;
        },
        py::arg("tendon_count") = 4, py::arg("tendon_radius") = 0.0011, py::arg("focal_px") = 300.0);
    m.def(
        "pseudo_inverse",
        [](const Eigen::MatrixXd& j, double damping) { return pseudo_inverse({j}, damping).m; },
        py::arg("jacobian"), py::arg("damping") = 0.0);

    m.def(
        "render_blobs",
        [](const Points& centers, int width, int height, double sigma) {
            CameraModel cam;
            cam.width = width;
            cam.height = height;
            return from_image(render_blobs(to_points(centers), cam, sigma));
        },
        py::arg("centers"), py::arg("width") = 380, py::arg("height") = 400, py::arg("sigma") = 2.5);
    m.def(
        "shi_tomasi",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img, int max_count,
           double min_distance) {
            ShiTomasiOptions opt;
            opt.max_count = max_count;
            opt.min_distance = min_distance;
            std::vector<PixelVector> pts;
            for (const auto& f : shi_tomasi(to_image(img), opt)) pts.push_back(f.position);
            return from_points(pts);
        },
        py::arg("image"), py::arg("max_count") = 16, py::arg("min_distance") = 5.0);
    m.def(
        "lucas_kanade",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& prev,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& next,
           const Points& features, int window) {
            LucasKanadeOptions opt;
            opt.window = window;
            const FlowMeasurement f = lucas_kanade(to_image(prev), to_image(next), to_points(features), opt);
            std::vector<PixelVector> flows;
            std::vector<bool> valid;
            for (const auto& p : f.per_feature) {
                flows.push_back(p.flow);
                valid.push_back(p.valid);
            }
            py::dict d;
            d["flow"] = from_points(flows);
            d["valid"] = valid;
            d["aggregate_v"] = f.aggregate_v;
            d["magnitude"] = f.magnitude;
            d["no_signal"] = f.no_signal;
            return d;
        },
        py::arg("prev"), py::arg("next"), py::arg("features"), py::arg("window") = 7);

    py::class_<TeleopSession>(m, "_TeleopSession")
        .def(py::init<Scenario>())
        .def("handle_message",
             [](TeleopSession& s, const std::string& text, bool from_driver) -> std::optional<std::string> {
                 if (auto r = s.handle_message(text, from_driver)) return r->dump();
                 return std::nullopt;
             },
             py::arg("text"), py::arg("from_driver") = true)
        .def("tick", [](TeleopSession& s) { return s.tick().dump(); })
        .def("hello", [](const TeleopSession& s, const std::string& role) { return s.hello(role).dump(); })
        .def("state", [](const TeleopSession& s) { return s.state_message().dump(); });

    m.attr("WIRE_SCHEMA_VERSION") = kWireSchemaVersion;
    m.attr("SCENARIO_SCHEMA_VERSION") = kScenarioSchemaVersion;
}
