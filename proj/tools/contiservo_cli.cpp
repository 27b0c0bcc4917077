// Command-line harness: run, sweep, plot, validate, teleop.

#include "contiservo/harness.hpp"
#include "contiservo/scenario.hpp"
#include "contiservo/teleop.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace contiservo;

namespace {

fs::path output_dir(const std::optional<std::string>& flag)
{
    if (flag) return *flag;
    if (const char* env = std::getenv("CONTISERVO_OUTPUT_DIR"); env && *env) return env;
    return "out";
}

void apply_overrides(Scenario& sc, const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& flow)
{
    if (seed) sc.seed = *seed;
    if (flow) sc.flow_source = flow_source_from_string(*flow);
}

void print_summary(const std::vector<SummaryRow>& rows)
{
    std::cout << std::left << std::setw(10) << "env" << std::setw(7) << "alpha" << std::setw(11)
              << "outcome" << std::setw(10) << "steps" << std::setw(14) << "final_theta"
              << "ss_var\n";
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(10) << r.environment << std::setw(7) << r.alpha
                  << std::setw(11) << to_string(r.outcome) << std::setw(10)
                  << (r.steps_to_converge ? std::to_string(*r.steps_to_converge) : "-")
                  << std::setw(14) << std::setprecision(4) << rad_to_deg(r.final_theta_hat)
                  << std::setprecision(4) << r.steady_state_variance << "\n";
    }
}

TeleopServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Orientation-adaptive visual servoing simulator for continuum manipulators"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> flow;
    std::optional<std::string> out;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("scenario", scenario_path, "Scenario file (YAML)")->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the scenario seed");
        sub->add_option("--flow", flow, "Flow source")
            ->check(CLI::IsMember({"synthetic", "lk", "lucas_kanade"}));
        sub->add_option("-o,--out", out,
                        "Output directory (default $CONTISERVO_OUTPUT_DIR or ./out)");
    };

    auto* run = app.add_subcommand("run", "Run one closed-loop trial");
    add_common(run);

    auto* sweep = app.add_subcommand("sweep", "Run the environment x alpha grid");
    add_common(sweep);
    std::vector<double> alphas{1.0, 0.95, 0.75, 0.50};
    std::vector<std::string> envs{"no_bend", "one_bend", "two_bend"};
    sweep->add_option("--alphas", alphas, "Filter constants")->delimiter(',');
    sweep->add_option("--envs", envs, "Environment presets")->delimiter(',');
    sweep->add_option("--jobs", jobs, "Parallel trials")->check(CLI::PositiveNumber);

    auto* plot = app.add_subcommand("plot", "Plot trial CSVs to SVG");
    std::vector<std::string> csvs;
    std::string svg_out = "plot.svg";
    plot->add_option("csv", csvs, "Trial CSV files")->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--out", svg_out, "Output SVG");

    auto* validate = app.add_subcommand("validate", "Check a scenario file and print it resolved");
    validate->add_option("scenario", scenario_path, "Scenario file (YAML)")->required()
        ->check(CLI::ExistingFile);

    auto* teleop = app.add_subcommand("teleop", "Serve the simulator over WebSocket");
    teleop->add_option("scenario", scenario_path, "Scenario file (YAML)")->required()
        ->check(CLI::ExistingFile);
    std::string bind = "127.0.0.1:8765";
    std::optional<std::string> ui_dir;
    teleop->add_option("--bind", bind, "host:port");
    teleop->add_option("--serve-ui", ui_dir, "Directory of static console files")
        ->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const Scenario sc = load_scenario(scenario_path);
            std::cout << dump_scenario(sc) << "# hash " << scenario_hash(sc) << "\n"
                      << "# effective flow_threshold " << effective_flow_threshold(sc) << "\n";
            return 0;
        }

        if (*run) {
            Scenario sc = load_scenario(scenario_path);
            apply_overrides(sc, seed, flow);
            sc.validate();
            const fs::path dir = output_dir(out);
            fs::create_directories(dir);
            const TrialRecord rec = run_trial(sc);
            const std::string stem = sc.estimator.mode == FilterMode::kalman
                                         ? sc.environment + "_kalman"
                                         : trial_stem(sc.environment, sc.estimator.alpha);
            const fs::path csv = dir / (stem + ".csv");
            export_csv(rec, csv);
            std::cout << to_string(rec.meta.outcome) << " after " << rec.rows.size()
                      << " steps; final theta_hat "
                      << rad_to_deg(rec.rows.empty() ? 0.0 : rec.rows.back().theta_hat)
                      << " deg -> " << csv.string() << "\n";
            return 0;
        }

        if (*sweep) {
            SweepSpec spec;
            spec.base = load_scenario(scenario_path);
            apply_overrides(spec.base, seed, flow);
            spec.alphas = alphas;
            spec.environments = envs;
            spec.jobs = jobs;
            const fs::path dir = output_dir(out);
            fs::create_directories(dir);
            const SweepResult res = run_sweep(spec);
            for (std::size_t i = 0; i < res.trials.size(); ++i) {
                const auto& env = spec.environments[i / spec.alphas.size()];
                const double a = spec.alphas[i % spec.alphas.size()];
                if (!res.trials[i].rows.empty())
                    export_csv(res.trials[i], dir / (trial_stem(env, a) + ".csv"));
            }
            for (std::size_t e = 0; e < spec.environments.size(); ++e) {
                std::vector<TrialRecord> recs;
                std::vector<std::string> labels;
                for (std::size_t k = 0; k < spec.alphas.size(); ++k) {
                    const auto& rec = res.trials[e * spec.alphas.size() + k];
                    if (rec.rows.empty()) continue;
                    recs.push_back(rec);
                    labels.push_back("alpha = " + std::to_string(spec.alphas[k]).substr(0, 4));
                }
                render_plot(recs, labels, dir / ("sweep_" + spec.environments[e] + ".svg"),
                            spec.base.camera.width, spec.base.camera.height);
            }
            write_summary_csv(res.summary, dir / "summary.csv");
            print_summary(res.summary);
            for (const auto& f : res.failures)
                std::cerr << "trial " << f.index << " failed: " << f.message << "\n";
            return res.failures.empty() ? 0 : 1;
        }

        if (*plot) {
            std::vector<TrialRecord> recs;
            std::vector<std::string> labels;
            for (const auto& c : csvs) {
                recs.push_back(import_csv(c));
                labels.push_back(fs::path(c).stem().string());
            }
            render_plot(recs, labels, svg_out);
            std::cout << "wrote " << svg_out << "\n";
            return 0;
        }

        if (*teleop) {
            const Scenario sc = load_scenario(scenario_path);
            const auto [host, port] = parse_bind(bind);
            std::optional<fs::path> ui;
            if (ui_dir) ui = fs::path(*ui_dir);
            TeleopServer server(sc, host, port, ui);
            const unsigned short bound = server.start();
            std::cout << "teleop listening on ws://" << host << ":" << bound << "\n" << std::flush;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.run();
            g_server = nullptr;
            return 0;
        }
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
