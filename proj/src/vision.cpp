#include "contiservo/vision.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace contiservo {

double Image::sample(double x, double y) const
{
    const int x0 = std::min(static_cast<int>(std::floor(x)), width - 2);
    const int y0 = std::min(static_cast<int>(std::floor(y)), height - 2);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
    const double bot = (1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
    return (1.0 - fy) * top + fy * bot;
}

Image render_blobs(std::span<const PixelVector> centers, const CameraModel& cam,
                   double blob_sigma)
{
    if (!(blob_sigma > 0.0)) throw std::invalid_argument("blob_sigma must be > 0");
    const int w = static_cast<int>(cam.width);
    const int h = static_cast<int>(cam.height);
    Image img(w, h, 0.0);
    const double reach = 5.0 * blob_sigma;
    const double inv2s2 = 1.0 / (2.0 * blob_sigma * blob_sigma);
    for (const auto& c : centers) {
        const int x0 = std::max(0, static_cast<int>(std::floor(c.x() - reach)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x() + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(c.y() - reach)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y() + reach)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - c.x();
                const double dy = y - c.y();
                img.at(x, y) += kBlobAmplitude * std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        }
    }
    for (auto& v : img.data) v = std::clamp(kBackground + v, 0.0, 1.0);
    return img;
}

RenderedFrame render_frame(std::span<const Eigen::Vector3d> features, const TipState& tip,
                           const CameraModel& cam, double blob_sigma)
{
    std::vector<PixelVector> visible;
    const double margin = 5.0 * blob_sigma;
    for (const auto& f : features) {
        try {
            const Projection p = project_point(f, tip, cam);
            if (p.px.x() > -margin && p.px.y() > -margin && p.px.x() < cam.width + margin &&
                p.px.y() < cam.height + margin)
                visible.push_back(p.px);
        } catch (const ProjectionError&) {
        }
    }
    const bool in_view = std::any_of(visible.begin(), visible.end(),
                                     [&](const PixelVector& p) { return cam.contains(p); });
    return {render_blobs(visible, cam, blob_sigma), !in_view};
}

namespace {

struct Gradients {
    Image gx;
    Image gy;
};

// Central differences; zero on the one-pixel border.
Gradients central_gradients(const Image& img)
{
    Gradients g{Image(img.width, img.height), Image(img.width, img.height)};
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < img.width; ++x) {
            g.gx.at(x, y) = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
            g.gy.at(x, y) = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
        }
    }
    return g;
}

double min_eigenvalue(double a, double b, double c)
{
    const double half_tr = 0.5 * (a + c);
    const double d = 0.5 * (a - c);
    return half_tr - std::sqrt(d * d + b * b);
}

double median_of(std::vector<double> v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), mid);
        m = 0.5 * (m + lo);
    }
    return m;
}

}  // namespace

Image shi_tomasi_scores(const Image& img, int window)
{
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("window must be odd and >= 3");
    const Gradients g = central_gradients(img);
    const int half = window / 2;
    Image score(img.width, img.height, 0.0);
    for (int y = half + 1; y + half + 1 < img.height; ++y) {
        for (int x = half + 1; x + half + 1 < img.width; ++x) {
            double a = 0.0, b = 0.0, c = 0.0;
            for (int j = -half; j <= half; ++j) {
                for (int i = -half; i <= half; ++i) {
                    const double ix = g.gx.at(x + i, y + j);
                    const double iy = g.gy.at(x + i, y + j);
                    a += ix * ix;
                    b += ix * iy;
                    c += iy * iy;
                }
            }
            score.at(x, y) = std::max(0.0, min_eigenvalue(a, b, c));
        }
    }
    return score;
}

std::vector<FeaturePoint> shi_tomasi(const Image& img, const ShiTomasiOptions& opt)
{
    const Image score = shi_tomasi_scores(img, opt.window);
    const double best = *std::max_element(score.data.begin(), score.data.end());
    if (!(best > 1e-12)) return {};

    const double floor = opt.quality_level * best;
    std::vector<FeaturePoint> candidates;
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < img.width; ++x) {
            const double s = score.at(x, y);
            if (s < floor) continue;
            bool is_max = true;
            for (int j = -1; j <= 1 && is_max; ++j)
                for (int i = -1; i <= 1; ++i)
                    if ((i || j) && score.at(x + i, y + j) > s) {
                        is_max = false;
                        break;
                    }
            if (is_max) candidates.push_back({PixelVector(x, y), s});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const FeaturePoint& a, const FeaturePoint& b) { return a.score > b.score; });

    std::vector<FeaturePoint> out;
    const double min_d2 = opt.min_distance * opt.min_distance;
    for (const auto& c : candidates) {
        if (static_cast<int>(out.size()) >= opt.max_count) break;
        const bool crowded = std::any_of(out.begin(), out.end(), [&](const FeaturePoint& f) {
            return (f.position - c.position).squaredNorm() < min_d2;
        });
        if (!crowded) out.push_back(c);
    }
    return out;
}

void aggregate_flow(FlowMeasurement& m)
{
    std::vector<double> fx, fy;
    for (const auto& f : m.per_feature) {
        if (!f.valid) continue;
        fx.push_back(f.flow.x());
        fy.push_back(f.flow.y());
    }
    m.aggregate_v = PixelVector::Zero();
    m.magnitude = 0.0;
    m.no_signal = fx.empty();
    if (m.no_signal) return;

    const double mx = median_of(fx);
    const double my = median_of(fy);
    std::vector<double> dx, dy;
    for (std::size_t i = 0; i < fx.size(); ++i) {
        dx.push_back(std::abs(fx[i] - mx));
        dy.push_back(std::abs(fy[i] - my));
    }
    const double madx = median_of(dx);
    const double mady = median_of(dy);

    PixelVector sum = PixelVector::Zero();
    int kept = 0;
    for (std::size_t i = 0; i < fx.size(); ++i) {
        if (dx[i] > 3.0 * madx || dy[i] > 3.0 * mady) continue;
        sum += PixelVector(fx[i], fy[i]);
        ++kept;
    }
    if (kept == 0) {
        // Only reachable when both MADs vanish and no flow sits on the median.
        sum = PixelVector(mx, my);
        kept = 1;
    }
    m.aggregate_v = -sum / kept;
    m.magnitude = m.aggregate_v.norm();
}

FlowMeasurement lucas_kanade(const Image& prev, const Image& next,
                             std::span<const PixelVector> features,
                             const LucasKanadeOptions& opt)
{
    if (prev.width != next.width || prev.height != next.height)
        throw std::invalid_argument("lucas_kanade: image sizes differ");
    if (opt.window < 3 || opt.window % 2 == 0)
        throw std::invalid_argument("window must be odd and >= 3");

    const Gradients g = central_gradients(prev);
    const int half = opt.window / 2;
    const int n_px = opt.window * opt.window;

    FlowMeasurement out;
    out.per_feature.reserve(features.size());
    std::vector<double> tmpl(n_px), wx(n_px), wy(n_px);

    for (const auto& p : features) {
        FeatureFlow ff{p, PixelVector::Zero(), false};
        const bool window_inside = prev.inside(p.x() - half - 1, p.y() - half - 1) &&
                                   prev.inside(p.x() + half + 1, p.y() + half + 1);
        if (!window_inside) {
            out.per_feature.push_back(ff);
            continue;
        }

        Eigen::Matrix2d gram = Eigen::Matrix2d::Zero();
        int k = 0;
        for (int j = -half; j <= half; ++j) {
            for (int i = -half; i <= half; ++i, ++k) {
                const double x = p.x() + i;
                const double y = p.y() + j;
                tmpl[k] = prev.sample(x, y);
                wx[k] = g.gx.sample(x, y);
                wy[k] = g.gy.sample(x, y);
                gram(0, 0) += wx[k] * wx[k];
                gram(0, 1) += wx[k] * wy[k];
                gram(1, 1) += wy[k] * wy[k];
            }
        }
        gram(1, 0) = gram(0, 1);

        const Eigen::Vector2d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(
                                        gram, Eigen::EigenvaluesOnly)
                                        .eigenvalues();
        if (!(eig[0] > 0.0) || eig[1] / eig[0] > opt.max_condition) {
            out.per_feature.push_back(ff);
            continue;
        }
        const Eigen::Matrix2d gram_inv = gram.inverse();

        PixelVector d = PixelVector::Zero();
        bool ok = true;
        bool converged = false;
        for (int iter = 0; iter < opt.max_iterations && ok; ++iter) {
            if (!next.inside(p.x() + d.x() - half, p.y() + d.y() - half) ||
                !next.inside(p.x() + d.x() + half, p.y() + d.y() + half)) {
                ok = false;
                break;
            }
            Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
            k = 0;
            for (int j = -half; j <= half; ++j) {
                for (int i = -half; i <= half; ++i, ++k) {
                    const double it = next.sample(p.x() + i + d.x(), p.y() + j + d.y()) - tmpl[k];
                    rhs.x() -= wx[k] * it;
                    rhs.y() -= wy[k] * it;
                }
            }
            const PixelVector delta = gram_inv * rhs;
            d += delta;
            if (d.norm() > opt.window) ok = false;
            if (delta.norm() < opt.epsilon) {
                converged = true;
                break;
            }
        }
        ff.valid = ok && converged && d.allFinite();
        if (ff.valid) ff.flow = d;
        out.per_feature.push_back(ff);
    }
    aggregate_flow(out);
    return out;
}

FlowMeasurement synthetic_flow(std::span<const PixelVector> prev,
                               std::span<const PixelVector> next, double noise_sigma,
                               std::mt19937_64& rng)
{
    if (prev.size() != next.size())
        throw std::invalid_argument("synthetic_flow: feature list lengths differ");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    FlowMeasurement out;
    out.per_feature.reserve(prev.size());
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        PixelVector f = next[i] - prev[i];
        if (noise_sigma > 0.0) {
            const double nx = noise(rng);
            const double ny = noise(rng);
            f += PixelVector(nx, ny);
        }
        out.per_feature.push_back({prev[i], f, true});
    }
    aggregate_flow(out);
    return out;
}

void write_pgm(const Image& img, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.data)
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace contiservo
