#pragma once

#include "contiservo/geometry.hpp"
#include "contiservo/kinematics.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace contiservo {

/// Row-major grayscale image, intensities in [0, 1]. Pixel (x, y) is the
/// sample at integer coordinates (x, y).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(std::size_t(w) * h, fill) {}

    double& at(int x, int y) { return data[std::size_t(y) * width + x]; }
    double at(int x, int y) const { return data[std::size_t(y) * width + x]; }
    bool inside(double x, double y) const
    {
        return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
    }
    /// Bilinear sample; caller guarantees inside(x, y).
    double sample(double x, double y) const;

    friend bool operator==(const Image&, const Image&) = default;
};

struct RenderedFrame {
    Image image;
    bool featureless = false;
};

struct FeaturePoint {
    PixelVector position;
    double score = 0.0;  // minimum eigenvalue of the structure tensor
};

struct FeatureFlow {
    PixelVector feature;
    PixelVector flow = PixelVector::Zero();
    bool valid = false;
};

struct FlowMeasurement {
    std::vector<FeatureFlow> per_feature;
    PixelVector aggregate_v = PixelVector::Zero();  // camera-motion estimate, px/step
    double magnitude = 0.0;
    bool no_signal = true;
};

inline constexpr double kBackground = 0.5;
inline constexpr double kBlobAmplitude = 0.4;

/// Gaussian blobs on a mid-gray background at the given pixel positions.
Image render_blobs(std::span<const PixelVector> centers, const CameraModel& cam,
                   double blob_sigma);

/// Renders world-frame features seen from the given tip orientation.
RenderedFrame render_frame(std::span<const Eigen::Vector3d> features, const TipState& tip,
                           const CameraModel& cam, double blob_sigma);

struct ShiTomasiOptions {
    int window = 7;
    int max_count = 16;
    double min_distance = 5.0;    // px between returned features
    double quality_level = 0.01;  // fraction of the best score
};

/// Corner detection by minimum structure-tensor eigenvalue. Returns local
/// maxima sorted by score descending; empty for a flat image.
std::vector<FeaturePoint> shi_tomasi(const Image& img, const ShiTomasiOptions& opt = {});

/// Full per-pixel score map (zero on the border where the window is clipped).
Image shi_tomasi_scores(const Image& img, int window);

struct LucasKanadeOptions {
    int window = 7;
    double max_condition = 1e4;
    int max_iterations = 20;
    double epsilon = 1e-3;  // px, iteration stop
};

/// Iterative (non-pyramidal) Lucas-Kanade. Per-feature flows are scene
/// motion; aggregate_v is the negated robust mean, i.e. camera motion.
FlowMeasurement lucas_kanade(const Image& prev, const Image& next,
                             std::span<const PixelVector> features,
                             const LucasKanadeOptions& opt = {});

/// Ground-truth flow (next - prev) plus independent Gaussian noise per axis.
FlowMeasurement synthetic_flow(std::span<const PixelVector> prev,
                               std::span<const PixelVector> next, double noise_sigma,
                               std::mt19937_64& rng);

/// Mean of valid flows after rejecting those more than 3 median absolute
/// deviations from the per-axis median. Fills aggregate_v, magnitude and
/// no_signal.
void aggregate_flow(FlowMeasurement& m);

/// Binary PGM (P5), 8-bit.
void write_pgm(const Image& img, const std::filesystem::path& path);

}  // namespace contiservo
