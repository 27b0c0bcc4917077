#pragma once

#include "contiservo/closed_loop.hpp"
#include "contiservo/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace contiservo {

enum class Outcome { converged, diverged, timeout };

struct TrialMetadata {
    std::string scenario_hash;
    std::uint64_t seed = 0;
    Outcome outcome = Outcome::timeout;
    std::optional<long> steps_to_converge;  // first step of the convergence streak
    std::string environment;
    double alpha = 1.0;

    friend bool operator==(const TrialMetadata&, const TrialMetadata&) = default;
};

struct TrialRecord {
    std::vector<TrialRow> rows;
    TrialMetadata meta;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Deterministic in (scenario, scenario.seed). Stops at the first outcome
/// when scenario.stop_on_outcome is set.
TrialRecord run_trial(const Scenario& sc);

struct SweepSpec {
    Scenario base;
    std::vector<std::string> environments{"no_bend", "one_bend", "two_bend"};
    std::vector<double> alphas{1.0, 0.95, 0.75, 0.50};
    int jobs = 1;

    void validate() const;
};

struct SummaryRow {
    std::string environment;
    double alpha = 1.0;
    Outcome outcome = Outcome::timeout;
    std::optional<long> steps_to_converge;
    double final_theta_hat = 0.0;
    double steady_state_variance = 0.0;
};

struct TrialFailure {
    std::size_t index = 0;
    std::string message;
};

struct SweepResult {
    // Grid order: environment-major, then alpha. Failed trials leave an
    // empty record and an entry in `failures`.
    std::vector<TrialRecord> trials;
    std::vector<SummaryRow> summary;
    std::vector<TrialFailure> failures;
};

/// Per-trial scenario: environment and alpha from the grid, seed derived from
/// (base.seed, trial index).
Scenario sweep_trial_scenario(const SweepSpec& spec, std::size_t index);

SweepResult run_sweep(const SweepSpec& spec);

/// Sample variance of theta_hat over the update steps in the second half of
/// the trial's updates; zero with fewer than two such steps.
double steady_state_variance(const TrialRecord& rec);

/// CSV with a header row and one row per step. Metadata goes to a sidecar
/// "<path>.meta.json".
void export_csv(const TrialRecord& rec, const std::filesystem::path& path);
TrialRecord import_csv(const std::filesystem::path& path);
std::string csv_text(const TrialRecord& rec);

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

/// Error-vs-time overlay and pixel-space trajectory panel in one SVG.
void render_plot(const std::vector<TrialRecord>& records, const std::vector<std::string>& labels,
                 const std::filesystem::path& path, double image_width = 380.0,
                 double image_height = 400.0);
std::string plot_svg(const std::vector<TrialRecord>& records,
                     const std::vector<std::string>& labels, double image_width = 380.0,
                     double image_height = 400.0);

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

/// Stable file stem for a sweep trial, e.g. "two_bend_alpha0.75".
std::string trial_stem(const std::string& environment, double alpha);

}  // namespace contiservo
