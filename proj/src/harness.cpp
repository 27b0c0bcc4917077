#include "contiservo/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace contiservo {

namespace {

constexpr const char* kCsvHeader =
    "t,target_x,target_y,error_norm_px,theta_hat,gate_open,flow_magnitude,V,V_delta,"
    "V_dot_analytic,phi_current,stalled";

// Shortest representation that parses back to the same double.
std::string num(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_field(std::string_view s, const std::string& context)
{
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::runtime_error(context + ": cannot parse '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::filesystem::path meta_path(const std::filesystem::path& csv)
{
    return std::filesystem::path(csv.string() + ".meta.json");
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string to_string(Outcome o)
{
    switch (o) {
    case Outcome::converged: return "converged";
    case Outcome::diverged: return "diverged";
    case Outcome::timeout: return "timeout";
    }
    return "timeout";
}

Outcome outcome_from_string(const std::string& s)
{
    if (s == "converged") return Outcome::converged;
    if (s == "diverged") return Outcome::diverged;
    if (s == "timeout") return Outcome::timeout;
    throw std::invalid_argument("unknown outcome '" + s + "'");
}

std::string trial_stem(const std::string& environment, double alpha)
{
    return environment + "_alpha" + num(alpha);
}

TrialRecord run_trial(const Scenario& sc)
{
    LoopState st = init_loop(sc);
    TrialRecord rec;
    rec.meta.scenario_hash = scenario_hash(sc);
    rec.meta.seed = sc.seed;
    rec.meta.environment = sc.environment;
    rec.meta.alpha = sc.estimator.alpha;
    rec.rows.reserve(static_cast<std::size_t>(sc.duration_steps));

    const auto& cc = sc.controller;
    const double initial_error = current_error(st, sc).norm();
    int near_streak = 0;
    int far_streak = 0;
    std::optional<Outcome> outcome;

    for (long t = 0; t < sc.duration_steps; ++t) {
        const TrialRow row = closed_loop_step(st, sc);
        rec.rows.push_back(row);
        if (outcome) continue;

        near_streak = row.error_norm_px < cc.convergence_radius_px ? near_streak + 1 : 0;
        far_streak = row.error_norm_px > cc.divergence_factor * initial_error ? far_streak + 1 : 0;
        if (near_streak >= cc.convergence_window) {
            outcome = Outcome::converged;
            rec.meta.steps_to_converge = row.t - cc.convergence_window + 1;
        } else if (far_streak >= cc.divergence_window || !sc.camera.contains(st.plant.target_px)) {
            outcome = Outcome::diverged;
        }
        if (outcome && sc.stop_on_outcome) break;
    }
    rec.meta.outcome = outcome.value_or(Outcome::timeout);
    return rec;
}

void SweepSpec::validate() const
{
    if (environments.empty()) throw ScenarioError("envs", "environment list is empty");
    if (alphas.empty()) throw ScenarioError("alphas", "alpha list is empty");
    for (double a : alphas)
        if (!(a > 0.0 && a <= 1.0))
            throw ScenarioError("alphas", "alpha " + num(a) + " outside (0, 1]");
    for (const auto& e : environments) {
        try {
            (void)preset(e);
        } catch (const std::invalid_argument& ex) {
            throw ScenarioError("envs", ex.what());
        }
    }
    if (jobs < 1) throw ScenarioError("jobs", "must be >= 1");
    base.validate();
}

Scenario sweep_trial_scenario(const SweepSpec& spec, std::size_t index)
{
    Scenario sc = spec.base;
    set_environment(sc, spec.environments.at(index / spec.alphas.size()));
    sc.estimator.alpha = spec.alphas.at(index % spec.alphas.size());
    sc.seed = derive_seed(spec.base.seed, index);
    return sc;
}

double steady_state_variance(const TrialRecord& rec)
{
    std::vector<double> updates;
    for (const auto& r : rec.rows)
        if (r.gate_open) updates.push_back(r.theta_hat);
    const std::size_t first = updates.size() / 2;
    const std::size_t n = updates.size() - first;
    if (n < 2) return 0.0;
    const double mean =
        std::accumulate(updates.begin() + long(first), updates.end(), 0.0) / double(n);
    double ss = 0.0;
    for (std::size_t i = first; i < updates.size(); ++i)
        ss += (updates[i] - mean) * (updates[i] - mean);
    return ss / double(n - 1);
}

SweepResult run_sweep(const SweepSpec& spec)
{
    spec.validate();
    const std::size_t n = spec.environments.size() * spec.alphas.size();
    SweepResult out;
    out.trials.resize(n);
    std::vector<std::optional<std::string>> errors(n);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out.trials[i] = run_trial(sweep_trial_scenario(spec, i));
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int jobs = std::min<int>(spec.jobs, static_cast<int>(n));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) {
            out.failures.push_back({i, *errors[i]});
            continue;
        }
        const auto& rec = out.trials[i];
        SummaryRow row;
        row.environment = spec.environments[i / spec.alphas.size()];
        row.alpha = spec.alphas[i % spec.alphas.size()];
        row.outcome = rec.meta.outcome;
        row.steps_to_converge = rec.meta.steps_to_converge;
        row.final_theta_hat = rec.rows.empty() ? 0.0 : rec.rows.back().theta_hat;
        row.steady_state_variance = steady_state_variance(rec);
        out.summary.push_back(row);
    }
    return out;
}

std::string csv_text(const TrialRecord& rec)
{
    std::string out = kCsvHeader;
    out += '\n';
    for (const auto& r : rec.rows) {
        out += std::to_string(r.t);
        for (double v : {r.target_px.x(), r.target_px.y(), r.error_norm_px, r.theta_hat}) {
            out += ',';
            out += num(v);
        }
        out += r.gate_open ? ",1," : ",0,";
        out += num(r.flow_magnitude);
        for (double v : {r.V, r.V_delta, r.V_dot_analytic, r.phi_current}) {
            out += ',';
            out += num(v);
        }
        out += r.stalled ? ",1\n" : ",0\n";
    }
    return out;
}

void export_csv(const TrialRecord& rec, const std::filesystem::path& path)
{
    write_file(path, csv_text(rec));
    nlohmann::ordered_json meta;
    meta["scenario_hash"] = rec.meta.scenario_hash;
    meta["seed"] = rec.meta.seed;
    meta["outcome"] = to_string(rec.meta.outcome);
    meta["steps_to_converge"] = rec.meta.steps_to_converge
                                    ? nlohmann::ordered_json(*rec.meta.steps_to_converge)
                                    : nlohmann::ordered_json(nullptr);
    meta["environment"] = rec.meta.environment;
    meta["alpha"] = rec.meta.alpha;
    write_file(meta_path(path), meta.dump(2) + "\n");
}

TrialRecord import_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    TrialRecord rec;
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader)
        throw std::runtime_error(path.string() + ": unexpected CSV header");
    long lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto ctx = path.string() + ":" + std::to_string(lineno);
        const auto f = split(line, ',');
        if (f.size() != 12) throw std::runtime_error(ctx + ": expected 12 fields");
        TrialRow r;
        r.t = parse_field<long>(f[0], ctx);
        r.target_px = {parse_field<double>(f[1], ctx), parse_field<double>(f[2], ctx)};
        r.error_norm_px = parse_field<double>(f[3], ctx);
        r.theta_hat = parse_field<double>(f[4], ctx);
        r.gate_open = parse_field<int>(f[5], ctx) != 0;
        r.flow_magnitude = parse_field<double>(f[6], ctx);
        r.V = parse_field<double>(f[7], ctx);
        r.V_delta = parse_field<double>(f[8], ctx);
        r.V_dot_analytic = parse_field<double>(f[9], ctx);
        r.phi_current = parse_field<double>(f[10], ctx);
        r.stalled = parse_field<int>(f[11], ctx) != 0;
        rec.rows.push_back(r);
    }

    const auto mp = meta_path(path);
    if (std::filesystem::exists(mp)) {
        std::ifstream ms(mp);
        const auto meta = nlohmann::json::parse(ms);
        rec.meta.scenario_hash = meta.at("scenario_hash").get<std::string>();
        rec.meta.seed = meta.at("seed").get<std::uint64_t>();
        rec.meta.outcome = outcome_from_string(meta.at("outcome").get<std::string>());
        if (!meta.at("steps_to_converge").is_null())
            rec.meta.steps_to_converge = meta.at("steps_to_converge").get<long>();
        rec.meta.environment = meta.at("environment").get<std::string>();
        rec.meta.alpha = meta.at("alpha").get<double>();
    }
    return rec;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path)
{
    std::string out =
        "environment,alpha,outcome,steps_to_converge,final_theta_hat,steady_state_variance\n";
    for (const auto& r : rows) {
        out += r.environment + "," + num(r.alpha) + "," + to_string(r.outcome) + ",";
        out += r.steps_to_converge ? std::to_string(*r.steps_to_converge) : std::string();
        out += "," + num(r.final_theta_hat) + "," + num(r.steady_state_variance) + "\n";
    }
    write_file(path, out);
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fixed(double v, int digits = 2)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

}  // namespace

std::string plot_svg(const std::vector<TrialRecord>& records,
                     const std::vector<std::string>& labels, double image_width,
                     double image_height)
{
    if (labels.size() != records.size())
        throw std::invalid_argument("plot: one label per record required");

    // Left panel: error vs time. Right panel: marker trajectory in the image.
    const double pw = 520, ph = 360, margin = 50, gap = 60;
    const double tw = ph * image_width / image_height;
    const double width = margin + pw + gap + tw + margin;
    const double height = margin + ph + margin + 20.0 * double(records.size());

    double t_max = 1.0, e_max = 1.0;
    for (const auto& r : records)
        for (const auto& row : r.rows) {
            t_max = std::max(t_max, double(row.t));
            e_max = std::max(e_max, row.error_norm_px);
        }

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0)
       << "\" height=\"" << fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    os << "<g id=\"error-panel\">\n";
    os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << pw << "\" height=\""
       << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << margin + pw / 2 << "\" y=\"" << margin - 15
       << "\" text-anchor=\"middle\">pixel distance to target</text>\n";
    os << "<text x=\"" << margin + pw / 2 << "\" y=\"" << margin + ph + 30
       << "\" text-anchor=\"middle\">step (t_max " << fixed(t_max, 0) << ")</text>\n";
    os << "<text x=\"" << margin - 5 << "\" y=\"" << margin + 4
       << "\" text-anchor=\"end\">" << fixed(e_max, 0) << "</text>\n";
    os << "<text x=\"" << margin - 5 << "\" y=\"" << margin + ph
       << "\" text-anchor=\"end\">0</text>\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        os << "<polyline class=\"series\" data-label=\"" << xml_escape(labels[i])
           << "\" fill=\"none\" stroke=\"" << kPalette[i % 8] << "\" points=\"";
        for (const auto& row : records[i].rows) {
            os << fixed(margin + pw * double(row.t) / t_max) << ","
               << fixed(margin + ph * (1.0 - row.error_norm_px / e_max)) << " ";
        }
        os << "\"/>\n";
    }
    os << "</g>\n";

    const double tx = margin + pw + gap;
    const double s = ph / image_height;
    os << "<g id=\"trajectory-panel\">\n";
    os << "<rect x=\"" << tx << "\" y=\"" << margin << "\" width=\"" << fixed(tw) << "\" height=\""
       << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fixed(tx + tw / 2) << "\" y=\"" << margin - 15
       << "\" text-anchor=\"middle\">target in image</text>\n";
    const double cx = tx + s * image_width / 2, cy = margin + s * image_height / 2;
    os << "<line x1=\"" << fixed(cx - 8) << "\" y1=\"" << fixed(cy) << "\" x2=\"" << fixed(cx + 8)
       << "\" y2=\"" << fixed(cy) << "\" stroke=\"gray\"/>\n";
    os << "<line x1=\"" << fixed(cx) << "\" y1=\"" << fixed(cy - 8) << "\" x2=\"" << fixed(cx)
       << "\" y2=\"" << fixed(cy + 8) << "\" stroke=\"gray\"/>\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        os << "<polyline class=\"trajectory\" data-label=\"" << xml_escape(labels[i])
           << "\" fill=\"none\" stroke=\"" << kPalette[i % 8] << "\" points=\"";
        for (const auto& row : records[i].rows) {
            const double x = std::clamp(row.target_px.x(), 0.0, image_width);
            const double y = std::clamp(row.target_px.y(), 0.0, image_height);
            os << fixed(tx + s * x) << "," << fixed(margin + s * y) << " ";
        }
        os << "\"/>\n";
    }
    os << "</g>\n";

    os << "<g id=\"legend\">\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double y = margin + ph + 50 + 20.0 * double(i);
        os << "<line x1=\"" << margin << "\" y1=\"" << y - 4 << "\" x2=\"" << margin + 20
           << "\" y2=\"" << y - 4 << "\" stroke=\"" << kPalette[i % 8]
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << margin + 28 << "\" y=\"" << y << "\">" << xml_escape(labels[i])
           << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

void render_plot(const std::vector<TrialRecord>& records, const std::vector<std::string>& labels,
                 const std::filesystem::path& path, double image_width, double image_height)
{
    write_file(path, plot_svg(records, labels, image_width, image_height));
}

}  // namespace contiservo
