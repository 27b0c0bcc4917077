#pragma once

#include "contiservo/controller.hpp"
#include "contiservo/estimator.hpp"
#include "contiservo/kinematics.hpp"
#include "contiservo/plant.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace contiservo {

inline constexpr int kScenarioSchemaVersion = 1;

enum class FlowSource { synthetic, lucas_kanade };

struct VisionConfig {
    int feature_count = 12;
    double feature_spread_px = 80.0;  // markers scattered within this radius of the target
    double blob_sigma = 2.5;
    int lk_window = 7;
};

struct Scenario {
    std::string environment = "no_bend";  // preset name or "custom"
    DisturbanceSpec disturbance = preset("no_bend").disturbance;
    EstimatorConfig estimator;
    std::optional<double> flow_threshold;  // unset: derived from the flow noise
    ControllerConfig controller;
    CameraModel camera;
    CatheterConfig catheter;
    VisionConfig vision;
    PixelVector initial_target_px = camera.center() + PixelVector(90.0, 110.0);
    long duration_steps = 2100;
    FlowSource flow_source = FlowSource::synthetic;
    std::uint64_t seed = 1;
    bool stop_on_outcome = true;

    /// Throws ScenarioError naming the offending field.
    void validate() const;
};

/// Validation failure carrying the dotted path of the offending field.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field))
    {
    }
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Switches to a named preset, replacing the disturbance.
void set_environment(Scenario& s, const std::string& name);

/// Gate threshold in use: the explicit value, else twice the standard
/// deviation of the aggregated (feature-averaged) flow noise.
double effective_flow_threshold(const Scenario& s);

/// Estimator config with the effective flow threshold filled in.
EstimatorConfig effective_estimator(const Scenario& s);

Scenario parse_scenario(const std::string& yaml_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string dump_scenario(const Scenario& s);

/// FNV-1a 64 of the canonical dump, hex.
std::string scenario_hash(const Scenario& s);

std::string to_string(FlowSource f);
FlowSource flow_source_from_string(const std::string& s);

}  // namespace contiservo
