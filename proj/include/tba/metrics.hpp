#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tba {

using Point3 = std::array<double, 3>;
using PointCloud = std::vector<Point3>;

// Similarity transform y ~ s * R * x + t with R a proper rotation.
struct SimilarityTransform {
    double scale = 1.0;
    std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    Point3 translation{0, 0, 0};

    Point3 apply(const Point3& p) const;
};

// Mean Euclidean distance between paired points (mm in, mm out).
double mpjpe(const PointCloud& pred, const PointCloud& gt);
inline double mpvpe(const PointCloud& pred, const PointCloud& gt) { return mpjpe(pred, gt); }

struct ProcrustesResult {
    SimilarityTransform transform;
    PointCloud aligned;
};

// Least-squares similarity alignment of pred onto gt (Umeyama closed form,
// covariance SVD with reflection guard). Throws on degenerate
// (coincident/collinear) input.
ProcrustesResult procrustes_align(const PointCloud& pred, const PointCloud& gt);

// metric(aligned pred, gt)
double pa_metric(const PointCloud& pred, const PointCloud& gt,
                 double (*metric)(const PointCloud&, const PointCloud&) = &mpjpe);

// 100 * (adv - clean) / clean; clean must be positive.
double error_growth(double clean_value, double adv_value);
// Two-decimal rendering used in every emitted table ("17.89").
std::string format2(double value);

enum class MetricKind { MPJPE, PA_MPJPE, MPVPE, PA_MPVPE };
enum class BodyRegion { All, Body, Hands, Face };

const char* to_string(MetricKind m);
const char* to_string(BodyRegion r);
std::optional<MetricKind> metric_from_string(const std::string& s);
std::optional<BodyRegion> region_from_string(const std::string& s);

struct MetricsCell {
    double clean_mm = 0.0;
    std::optional<double> adv_mm;
    std::optional<double> growth_pct;  // derived from clean/adv
};

struct MetricsReport {
    std::map<std::pair<MetricKind, BodyRegion>, MetricsCell> cells;
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;

    const MetricsCell& at(MetricKind m, BodyRegion r) const;
    bool has(MetricKind m, BodyRegion r) const;
    // one row per region x metric: metric,region,clean,adv,growth
    std::string to_csv(const std::string& model_label) const;
    // "clean | adv (growth%)" cells
    std::string to_markdown(const std::string& model_label) const;
};

// A labeled set of point subsets over a geometry layout; see body_model for
// the construction from skeleton region tags.
struct RegionIndex {
    std::vector<std::size_t> joints;    // indices into the joint array
    std::vector<std::size_t> vertices;  // indices into the vertex array
};

struct GeometryPair {
    PointCloud pred_joints_mm, gt_joints_mm;
    PointCloud pred_vertices_mm, gt_vertices_mm;
};

// Per-sample alignment, then averaging across samples. PA cells are emitted
// only for regions with enough points to align (>= 3). Throws when a
// requested region is empty (small profile asked for hands/face).
MetricsReport region_report(const std::vector<GeometryPair>& pairs,
                            const std::map<BodyRegion, RegionIndex>& regions);

}  // namespace tba
