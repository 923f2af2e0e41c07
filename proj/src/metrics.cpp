#include "tba/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tba {

Point3 SimilarityTransform::apply(const Point3& p) const {
    Point3 out;
    for (int r = 0; r < 3; ++r)
        out[r] = scale * (rotation[r][0] * p[0] + rotation[r][1] * p[1] + rotation[r][2] * p[2]) +
                 translation[r];
    return out;
}

double mpjpe(const PointCloud& pred, const PointCloud& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("mpjpe: point count mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(gt.size()));
    if (pred.empty()) throw std::invalid_argument("mpjpe: empty point set");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double dx = pred[i][0] - gt[i][0];
        double dy = pred[i][1] - gt[i][1];
        double dz = pred[i][2] - gt[i][2];
        acc += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return acc / static_cast<double>(pred.size());
}

ProcrustesResult procrustes_align(const PointCloud& pred, const PointCloud& gt) {
    const std::size_t n = pred.size();
    if (n != gt.size() || n < 3)
        throw std::invalid_argument("procrustes_align: need >= 3 paired points");

    Eigen::Matrix3Xd X(3, n), Y(3, n);
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < 3; ++r) {
            X(r, i) = pred[i][r];
            Y(r, i) = gt[i][r];
        }
    const Eigen::Vector3d mu_x = X.rowwise().mean();
    const Eigen::Vector3d mu_y = Y.rowwise().mean();
    X.colwise() -= mu_x;
    Y.colwise() -= mu_y;

    const double var_x = X.squaredNorm() / static_cast<double>(n);
    const Eigen::Matrix3d sigma = Y * X.transpose() / static_cast<double>(n);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d d = svd.singularValues();
    if (var_x <= 0.0 || d(1) <= 1e-9 * d(0) || !(d(0) > 0.0))
        throw std::invalid_argument("procrustes_align: degenerate (coincident or collinear) points");

    Eigen::Vector3d s_diag(1.0, 1.0, 1.0);
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_diag(2) = -1.0;
    const Eigen::Matrix3d R = svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
    const double s = d.dot(s_diag) / var_x;
    const Eigen::Vector3d t = mu_y - s * R * mu_x;

    ProcrustesResult res;
    res.transform.scale = s;
    for (int r = 0; r < 3; ++r) {
        res.transform.translation[r] = t(r);
        for (int c = 0; c < 3; ++c) res.transform.rotation[r][c] = R(r, c);
    }
    res.aligned.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.aligned[i] = res.transform.apply(pred[i]);
    return res;
}

double pa_metric(const PointCloud& pred, const PointCloud& gt,
                 double (*metric)(const PointCloud&, const PointCloud&)) {
    return metric(procrustes_align(pred, gt).aligned, gt);
}

double error_growth(double clean_value, double adv_value) {
    if (!(clean_value > 0.0))
        throw std::invalid_argument("error_growth: clean value must be positive");
    return 100.0 * (adv_value - clean_value) / clean_value;
}

std::string format2(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

const char* to_string(MetricKind m) {
    switch (m) {
        case MetricKind::MPJPE: return "MPJPE";
        case MetricKind::PA_MPJPE: return "PA_MPJPE";
        case MetricKind::MPVPE: return "MPVPE";
        case MetricKind::PA_MPVPE: return "PA_MPVPE";
    }
    return "?";
}

const char* to_string(BodyRegion r) {
    switch (r) {
        case BodyRegion::All: return "All";
        case BodyRegion::Body: return "Body";
        case BodyRegion::Hands: return "Hands";
        case BodyRegion::Face: return "Face";
    }
    return "?";
}

std::optional<MetricKind> metric_from_string(const std::string& s) {
    for (MetricKind m : {MetricKind::MPJPE, MetricKind::PA_MPJPE, MetricKind::MPVPE, MetricKind::PA_MPVPE})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

std::optional<BodyRegion> region_from_string(const std::string& s) {
    for (BodyRegion r : {BodyRegion::All, BodyRegion::Body, BodyRegion::Hands, BodyRegion::Face})
        if (s == to_string(r)) return r;
    return std::nullopt;
}

const MetricsCell& MetricsReport::at(MetricKind m, BodyRegion r) const {
    auto it = cells.find({m, r});
    if (it == cells.end())
        throw std::out_of_range(std::string("MetricsReport: no cell ") + to_string(m) + "/" + to_string(r));
    return it->second;
}

bool MetricsReport::has(MetricKind m, BodyRegion r) const { return cells.count({m, r}) > 0; }

std::string MetricsReport::to_csv(const std::string& model_label) const {
    std::ostringstream os;
    os << "model,metric,region,clean_mm,adv_mm,growth_pct\n";
    for (const auto& [key, cell] : cells) {
        os << model_label << ',' << to_string(key.first) << ',' << to_string(key.second) << ','
           << format2(cell.clean_mm) << ',';
        if (cell.adv_mm) os << format2(*cell.adv_mm);
        os << ',';
        if (cell.growth_pct) os << format2(*cell.growth_pct);
        os << '\n';
    }
    return os.str();
}

std::string MetricsReport::to_markdown(const std::string& model_label) const {
    std::ostringstream os;
    os << "| Model | Metric | Region | Clean \\| Adv (growth%) |\n";
    os << "|---|---|---|---|\n";
    for (const auto& [key, cell] : cells) {
        os << "| " << model_label << " | " << to_string(key.first) << " | " << to_string(key.second)
           << " | " << format2(cell.clean_mm);
        if (cell.adv_mm) {
            os << " \\| **" << format2(*cell.adv_mm) << "**";
            if (cell.growth_pct) os << " (" << format2(*cell.growth_pct) << "%)";
        }
        os << " |\n";
    }
    return os.str();
}

namespace {

PointCloud subset(const PointCloud& points, const std::vector<std::size_t>& idx) {
    PointCloud out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(points.at(i));
    return out;
}

}  // namespace

MetricsReport region_report(const std::vector<GeometryPair>& pairs,
                            const std::map<BodyRegion, RegionIndex>& regions) {
    if (pairs.empty()) throw std::invalid_argument("region_report: no samples");
    MetricsReport report;
    report.sample_count = pairs.size();
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const auto& [region, index] : regions) {
        if (index.joints.empty())
            throw std::invalid_argument(std::string("region_report: region ") + to_string(region) +
                                        " has no joints in the active profile");
        double m_j = 0.0, m_v = 0.0, pa_j = 0.0, pa_v = 0.0;
        const bool pa_joints_ok = index.joints.size() >= 3;
        const bool pa_verts_ok = index.vertices.size() >= 3;
        for (const GeometryPair& pair : pairs) {
            PointCloud pj = subset(pair.pred_joints_mm, index.joints);
            PointCloud gj = subset(pair.gt_joints_mm, index.joints);
            PointCloud pv = subset(pair.pred_vertices_mm, index.vertices);
            PointCloud gv = subset(pair.gt_vertices_mm, index.vertices);
            m_j += mpjpe(pj, gj);
            m_v += mpvpe(pv, gv);
            if (pa_joints_ok) pa_j += pa_metric(pj, gj);
            if (pa_verts_ok) pa_v += pa_metric(pv, gv);
        }
        report.cells[{MetricKind::MPJPE, region}] = {m_j * inv_n, std::nullopt, std::nullopt};
        report.cells[{MetricKind::MPVPE, region}] = {m_v * inv_n, std::nullopt, std::nullopt};
        if (pa_joints_ok)
            report.cells[{MetricKind::PA_MPJPE, region}] = {pa_j * inv_n, std::nullopt, std::nullopt};
        if (pa_verts_ok)
            report.cells[{MetricKind::PA_MPVPE, region}] = {pa_v * inv_n, std::nullopt, std::nullopt};
    }
    return report;
}

}  // namespace tba
