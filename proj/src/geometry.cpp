#include "polarbev/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

namespace polarbev::geo {

namespace {
constexpr double kPi = std::numbers::pi;
}

double PolarGrid::angular_step() const { return 2.0 * kPi / static_cast<double>(d_ang); }

PolarGrid build_polar_grid(double r_max, std::int64_t d_rad, std::int64_t d_ang) {
    if (!(r_max > 0.0) || d_rad < 1 || d_ang < 1) {
        throw ConfigError("build_polar_grid: need r_max > 0, d_rad >= 1, d_ang >= 1, got r_max=" +
                          std::to_string(r_max) + " d_rad=" + std::to_string(d_rad) +
                          " d_ang=" + std::to_string(d_ang));
    }
    PolarGrid g;
    g.r_max = r_max;
    g.d_rad = d_rad;
    g.d_ang = d_ang;
    const double dr = r_max / static_cast<double>(d_rad);
    const double dt = 2.0 * kPi / static_cast<double>(d_ang);
    g.r_centers.resize(static_cast<std::size_t>(d_rad));
    for (std::int64_t j = 0; j < d_rad; ++j) {
        g.r_centers[j] = (static_cast<double>(j) + 0.5) * dr;
    }
    g.theta_centers.resize(static_cast<std::size_t>(d_ang));
    for (std::int64_t k = 0; k < d_ang; ++k) {
        g.theta_centers[k] = -kPi + (static_cast<double>(k) + 0.5) * dt;
    }
    return g;
}

RectGrid build_rect_grid(double extent_x, double extent_y, std::int64_t nx, std::int64_t ny) {
    if (!(extent_x > 0.0) || !(extent_y > 0.0) || nx < 1 || ny < 1) {
        throw ConfigError("build_rect_grid: non-positive arguments");
    }
    return RectGrid{extent_x, extent_y, nx, ny};
}

BevGridLayout layout_of(const PolarGrid& grid) {
    BevGridLayout l;
    l.rows = grid.d_rad;
    l.cols = grid.d_ang;
    l.wrap_cols = true;
    l.cx.resize(static_cast<std::size_t>(grid.cells()));
    l.cy.resize(static_cast<std::size_t>(grid.cells()));
    for (std::int64_t j = 0; j < grid.d_rad; ++j) {
        for (std::int64_t k = 0; k < grid.d_ang; ++k) {
            const auto c = polar_to_cartesian({grid.r_centers[j], grid.theta_centers[k]});
            l.cx[j * grid.d_ang + k] = c.x;
            l.cy[j * grid.d_ang + k] = c.y;
        }
    }
    return l;
}

BevGridLayout layout_of(const RectGrid& grid) {
    BevGridLayout l;
    l.rows = grid.nx;
    l.cols = grid.ny;
    l.wrap_cols = false;
    l.cx.resize(static_cast<std::size_t>(grid.cells()));
    l.cy.resize(static_cast<std::size_t>(grid.cells()));
    for (std::int64_t i = 0; i < grid.nx; ++i) {
        for (std::int64_t j = 0; j < grid.ny; ++j) {
            l.cx[i * grid.ny + j] = grid.center_x(i);
            l.cy[i * grid.ny + j] = grid.center_y(j);
        }
    }
    return l;
}

PolarCoord cartesian_to_polar(const CartCoord& c) {
    return {std::hypot(c.x, c.y), std::atan2(c.y, c.x)};
}

void CameraModel::validate() const {
    if (width < 1 || height < 1) {
        throw ValidationError("camera " + name + ": non-positive image size");
    }
    if (!(fx() > 0.0) || !(fy() > 0.0)) {
        throw ValidationError("camera " + name + ": focal lengths must be positive");
    }
    const Eigen::Matrix3d r = rotation();
    const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity()).norm();
    if (ortho > 1e-9) {
        throw ValidationError("camera " + name + ": rotation not orthonormal (|RR^T - I| = " +
                              std::to_string(ortho) + ")");
    }
    if (std::abs(r.determinant() - 1.0) > 1e-9) {
        throw ValidationError("camera " + name + ": rotation determinant is not +1");
    }
}

void CameraRig::validate() const {
    if (cameras.empty()) {
        throw ValidationError("rig has no cameras");
    }
    std::set<std::string> names;
    for (const auto& cam : cameras) {
        cam.validate();
        if (!names.insert(cam.name).second) {
            throw ValidationError("duplicate camera name " + cam.name);
        }
    }
}

PixelProjection project_to_view(const Eigen::Vector4d& w, const CameraModel& cam) {
    const Eigen::Vector3d q = cam.intrinsics * (cam.extrinsics * w);
    PixelProjection p;
    p.depth = q(2);
    if (p.depth <= kDepthEps) {
        return p;
    }
    p.u = q(0) / q(2);
    p.v = q(1) / q(2);
    p.valid = p.u >= 0.0 && p.u <= static_cast<double>(cam.width - 1) && p.v >= 0.0 &&
              p.v <= static_cast<double>(cam.height - 1);
    return p;
}

Eigen::Vector3d unproject_pixel(double u, double v, double depth, const CameraModel& cam) {
    const Eigen::Vector3d pc((u - cam.cx()) / cam.fx() * depth, (v - cam.cy()) / cam.fy() * depth,
                             depth);
    return cam.rotation().transpose() * (pc - cam.translation());
}

GridProjection project_grid(const BevGridLayout& grid, const std::vector<double>& heights,
                            const CameraRig& rig, bool with_derivatives) {
    const std::int64_t cells = grid.rows * grid.cols;
    if (static_cast<std::int64_t>(heights.size()) != cells) {
        throw DimensionError("project_grid: heights size " + std::to_string(heights.size()) +
                             " does not match grid cells " + std::to_string(cells));
    }
    GridProjection out;
    out.views = static_cast<std::int64_t>(rig.size());
    out.cells = cells;
    out.uv.assign(static_cast<std::size_t>(out.views * cells * 2), 0.0);
    out.mask.assign(static_cast<std::size_t>(out.views * cells), 0);
    out.depth.assign(static_cast<std::size_t>(out.views * cells), 0.0);
    if (with_derivatives) {
        out.duv_dz.assign(static_cast<std::size_t>(out.views * cells * 2), 0.0);
    }
    for (std::int64_t n = 0; n < out.views; ++n) {
        const CameraModel& cam = rig.cameras[static_cast<std::size_t>(n)];
        const Eigen::Matrix<double, 3, 4> pm = cam.intrinsics * cam.extrinsics;
        // column 2 of the projection matrix is d(q)/dz
        const Eigen::Vector3d dq_dz = pm.col(2);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < cells; ++i) {
            const Eigen::Vector4d w(grid.cx[i], grid.cy[i], heights[static_cast<std::size_t>(i)], 1.0);
            const Eigen::Vector3d q = pm * w;
            const std::int64_t base = n * cells + i;
            out.depth[base] = q(2);
            if (q(2) <= kDepthEps) continue;
            const double u = q(0) / q(2);
            const double v = q(1) / q(2);
            out.uv[base * 2 + 0] = u;
            out.uv[base * 2 + 1] = v;
            out.mask[base] = u >= 0.0 && u <= static_cast<double>(cam.width - 1) && v >= 0.0 &&
                                     v <= static_cast<double>(cam.height - 1)
                                 ? 1
                                 : 0;
            if (with_derivatives) {
                // quotient rule for u = q0/q2, v = q1/q2
                out.duv_dz[base * 2 + 0] = (dq_dz(0) * q(2) - q(0) * dq_dz(2)) / (q(2) * q(2));
                out.duv_dz[base * 2 + 1] = (dq_dz(1) * q(2) - q(1) * dq_dz(2)) / (q(2) * q(2));
            }
        }
    }
    return out;
}

namespace {

nlohmann::json camera_to_json(const CameraModel& cam) {
    nlohmann::json j;
    j["name"] = cam.name;
    std::vector<double> k(9), e(12);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) k[r * 3 + c] = cam.intrinsics(r, c);
        for (int c = 0; c < 4; ++c) e[r * 4 + c] = cam.extrinsics(r, c);
    }
    j["intrinsics"] = k;
    j["extrinsics"] = e;
    j["width"] = cam.width;
    j["height"] = cam.height;
    return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
    CameraModel cam;
    cam.name = j.at("name").get<std::string>();
    const auto k = j.at("intrinsics").get<std::vector<double>>();
    const auto e = j.at("extrinsics").get<std::vector<double>>();
    if (k.size() != 9 || e.size() != 12) {
        throw ValidationError("camera " + cam.name + ": intrinsics/extrinsics must be 9/12 values");
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = k[r * 3 + c];
        for (int c = 0; c < 4; ++c) cam.extrinsics(r, c) = e[r * 4 + c];
    }
    cam.width = j.at("width").get<std::int64_t>();
    cam.height = j.at("height").get<std::int64_t>();
    return cam;
}

} // namespace

CameraRig load_rig(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open rig file " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("rig file " + path.string() + ": " + e.what());
    }
    CameraRig rig;
    for (const auto& cj : j.at("cameras")) {
        rig.cameras.push_back(camera_from_json(cj));
    }
    rig.validate();
    return rig;
}

void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
    nlohmann::json j;
    j["cameras"] = nlohmann::json::array();
    for (const auto& cam : rig.cameras) {
        j["cameras"].push_back(camera_to_json(cam));
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << j.dump(2) << "\n";
}

} // namespace polarbev::geo
