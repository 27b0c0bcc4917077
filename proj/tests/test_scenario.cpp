#include "contiservo/scenario.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace contiservo;

namespace {

std::string field_of(const std::string& yaml)
{
    try {
        parse_scenario(yaml);
    } catch (const ScenarioError& e) {
        return e.field();
    }
    return "<no error>";
}

}  // namespace

TEST(Scenario, DefaultFileParses)
{
    const Scenario s = load_scenario(std::filesystem::path(CONTISERVO_SOURCE_DIR) / "scenarios/default.yaml");
    EXPECT_EQ(s.environment, "one_bend");
    EXPECT_DOUBLE_EQ(s.estimator.alpha, 0.95);
    EXPECT_EQ(s.seed, 20190601u);
    EXPECT_FALSE(s.flow_threshold.has_value());
    EXPECT_EQ(s.initial_target_px, PixelVector(280, 310));
}

TEST(Scenario, AllShippedScenariosParse)
{
    for (const auto& e : std::filesystem::directory_iterator(
             std::filesystem::path(CONTISERVO_SOURCE_DIR) / "scenarios")) {
        if (e.path().extension() != ".yaml") continue;
        EXPECT_NO_THROW(load_scenario(e.path())) << e.path();
    }
}

TEST(Scenario, UnknownKeyNamesItsPath)
{
    EXPECT_EQ(field_of("schema_version: 1\nestimator: {alhpa: 0.9}\n"), "estimator.alhpa");
    EXPECT_EQ(field_of("schema_version: 1\nbogus: 3\n"), "bogus");
    EXPECT_EQ(field_of("schema_version: 1\nenvironment: {shear: {sigma3: 1}}\n"),
              "environment.shear.sigma3");
}

TEST(Scenario, BadValuesNameTheirField)
{
    EXPECT_EQ(field_of("seed: 1\n"), "schema_version");
    EXPECT_EQ(field_of("schema_version: 2\n"), "schema_version");
    EXPECT_EQ(field_of("schema_version: 1\nestimator: {alpha: high}\n"), "estimator.alpha");
    EXPECT_EQ(field_of("schema_version: 1\nestimator: {alpha: 1.5}\n"), "estimator");
    EXPECT_EQ(field_of("schema_version: 1\nenvironment: three_bend\n"), "environment");
    EXPECT_EQ(field_of("schema_version: 1\nflow_source: optical\n"), "flow_source");
    EXPECT_EQ(field_of("schema_version: 1\ninitial_target_px: [1000, 10]\n"), "initial_target_px");
    EXPECT_EQ(field_of("schema_version: 1\nestimator: {wrap_mode: mod}\n"), "estimator.wrap_mode");
    EXPECT_EQ(field_of("schema_version: 1\ncontroller: {measure_against: both}\n"),
              "controller.measure_against");
    EXPECT_EQ(field_of("schema_version: 1\nvision: {lk_window: 4}\n"), "vision.lk_window");
    EXPECT_EQ(field_of("schema_version: [1\n"), "<root>");
}

TEST(Scenario, EnvironmentOverrides)
{
    const Scenario p = parse_scenario("schema_version: 1\nenvironment: {preset: two_bend}\n");
    EXPECT_EQ(p.environment, "two_bend");

    const Scenario c = parse_scenario(
        "schema_version: 1\nenvironment: {preset: two_bend, rotation_phi_deg: 90}\n");
    EXPECT_EQ(c.environment, "custom");
    EXPECT_NEAR(c.disturbance.rotation_phi, kPi / 2, 1e-15);
    EXPECT_DOUBLE_EQ(c.disturbance.scale_s, 0.6);

    const Scenario bare = parse_scenario("schema_version: 1\nenvironment: {rotation_phi_deg: 30}\n");
    EXPECT_EQ(bare.environment, "custom");
    EXPECT_EQ(bare.disturbance.flow_noise_sigma, 0.0);
}

TEST(Scenario, DumpRoundTrips)
{
    for (const std::string yaml :
         {"schema_version: 1\nenvironment: one_bend\n",
          "schema_version: 1\nenvironment: {preset: no_bend, shear: {sigma1: 1.2, sigma2: 0.8, psi_deg: 10}}\n"
          "estimator: {mode: kalman, sigma_w: 0.05, flow_threshold: 0.25, theta_hat_0_deg: -33.3}\n"
          "controller: {measure_against: intent, damping: 0.01}\nflow_source: lk\nseed: 77\n"}) {
        const Scenario a = parse_scenario(yaml);
        const Scenario b = parse_scenario(dump_scenario(a));
        EXPECT_EQ(dump_scenario(a), dump_scenario(b));
        EXPECT_EQ(scenario_hash(a), scenario_hash(b));
        EXPECT_EQ(a.environment, b.environment);
        EXPECT_EQ(a.disturbance.rotation_phi, b.disturbance.rotation_phi);
    }
}

TEST(Scenario, HashTracksContent)
{
    Scenario a;
    Scenario b;
    EXPECT_EQ(scenario_hash(a), scenario_hash(b));
    EXPECT_EQ(scenario_hash(a).size(), 16u);
    b.estimator.alpha = 0.75;
    EXPECT_NE(scenario_hash(a), scenario_hash(b));
}

TEST(Scenario, FlowThresholdDefaultsFromNoise)
{
    Scenario s;
    set_environment(s, "two_bend");
    s.vision.feature_count = 16;
    EXPECT_DOUBLE_EQ(effective_flow_threshold(s), 2.0 * 2.0 / 4.0);
    s.flow_threshold = 0.3;
    EXPECT_DOUBLE_EQ(effective_estimator(s).flow_threshold, 0.3);
}
