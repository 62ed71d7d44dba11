#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polarbev/common.hpp"

namespace polarbev::geo {

// Ego frame: x forward, y left, z up; azimuth theta measured from +x toward
// +y. Camera frame: +z along the optical axis, +x right (u), +y down (v).

// Polar BEV raster. Row index = radial bin, column index = angular bin; cell
// centers sit at bin midpoints.
struct PolarGrid {
    double r_max = 0.0;
    std::int64_t d_rad = 0;
    std::int64_t d_ang = 0;
    std::vector<double> r_centers;     // d_rad
    std::vector<double> theta_centers; // d_ang, in [-pi, pi)

    double radial_step() const { return r_max / static_cast<double>(d_rad); }
    double angular_step() const;
    std::int64_t cells() const { return d_rad * d_ang; }
};

PolarGrid build_polar_grid(double r_max, std::int64_t d_rad, std::int64_t d_ang);

// Uniform cartesian BEV raster over [-extent_x/2, extent_x/2] x
// [-extent_y/2, extent_y/2]; rows scan x, columns scan y. Used by the grid
// distribution ablation.
struct RectGrid {
    double extent_x = 0.0, extent_y = 0.0;
    std::int64_t nx = 0, ny = 0;

    double step_x() const { return extent_x / static_cast<double>(nx); }
    double step_y() const { return extent_y / static_cast<double>(ny); }
    double center_x(std::int64_t i) const { return -extent_x / 2.0 + (static_cast<double>(i) + 0.5) * step_x(); }
    double center_y(std::int64_t j) const { return -extent_y / 2.0 + (static_cast<double>(j) + 0.5) * step_y(); }
    std::int64_t cells() const { return nx * ny; }
};

RectGrid build_rect_grid(double extent_x, double extent_y, std::int64_t nx, std::int64_t ny);

// Unified cell-center view used by the feature transformation. `wrap_cols`
// marks the angular axis as circular for the convolution stack.
struct BevGridLayout {
    std::int64_t rows = 0, cols = 0;
    std::vector<double> cx, cy; // rows*cols, row-major
    bool wrap_cols = false;
};

BevGridLayout layout_of(const PolarGrid& grid);
BevGridLayout layout_of(const RectGrid& grid);

struct PolarCoord {
    double r;
    double theta;
};

struct CartCoord {
    double x;
    double y;
};

inline CartCoord polar_to_cartesian(const PolarCoord& p) {
    return {p.r * std::cos(p.theta), p.r * std::sin(p.theta)};
}

PolarCoord cartesian_to_polar(const CartCoord& c);

inline Eigen::Vector4d lift_homogeneous(double x, double y, double z) { return {x, y, z, 1.0}; }

struct CameraModel {
    std::string name;
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    Eigen::Matrix<double, 3, 4> extrinsics = Eigen::Matrix<double, 3, 4>::Zero(); // ego -> camera
    std::int64_t width = 0;
    std::int64_t height = 0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }
    Eigen::Matrix3d rotation() const { return extrinsics.leftCols<3>(); }
    Eigen::Vector3d translation() const { return extrinsics.col(3); }
    // Camera center in ego coordinates.
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

    void validate() const; // throws ValidationError
};

struct CameraRig {
    std::vector<CameraModel> cameras;

    std::size_t size() const { return cameras.size(); }
    void validate() const;
};

constexpr double kDepthEps = 1e-6; // meters; points at or behind the lens plane are invalid

struct PixelProjection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
    bool valid = false;
};

// Pinhole projection with perspective division and validity. Valid requires
// depth > kDepthEps and (u, v) inside [0, width-1] x [0, height-1]
// (pixel-center convention). (u, v) are undefined when invalid.
PixelProjection project_to_view(const Eigen::Vector4d& w, const CameraModel& cam);

// Ray through pixel (u, v) at the given camera depth, back to ego coordinates.
Eigen::Vector3d unproject_pixel(double u, double v, double depth, const CameraModel& cam);

// Batched projection of all grid cell centers at per-cell heights.
// uv: [k x cells x 2], mask: [k x cells], depth: [k x cells],
// duv_dz: [k x cells x 2] derivative of (u, v) w.r.t. the cell height.
struct GridProjection {
    std::int64_t views = 0;
    std::int64_t cells = 0;
    std::vector<double> uv;
    std::vector<std::uint8_t> mask;
    std::vector<double> depth;
    std::vector<double> duv_dz;

    std::int64_t at(std::int64_t view, std::int64_t cell) const { return view * cells + cell; }
};

GridProjection project_grid(const BevGridLayout& grid, const std::vector<double>& heights,
                            const CameraRig& rig, bool with_derivatives = false);

// Rig calibration JSON: per camera name, row-major 3x3 intrinsics, row-major
// 3x4 ego->camera extrinsics, width, height.
CameraRig load_rig(const std::filesystem::path& path);
void save_rig(const std::filesystem::path& path, const CameraRig& rig);

} // namespace polarbev::geo
