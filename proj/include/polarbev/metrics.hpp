#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polarbev/common.hpp"
#include "polarbev/tensor.hpp"

namespace polarbev::metrics {

// Integer-labelled BEV raster; 0 is background, positive values are instance
// ids. Canonical maps use the contiguous id set {1..n}.
struct InstanceMap {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::int32_t> labels; // rows * cols, row-major

    std::int32_t& at(std::int64_t r, std::int64_t c) { return labels[r * cols + c]; }
    std::int32_t at(std::int64_t r, std::int64_t c) const { return labels[r * cols + c]; }
    std::int64_t cells() const { return rows * cols; }
    std::int32_t max_id() const;
    bool empty_map() const { return max_id() == 0; }
};

// Relabels ids to {1..n} in order of first row-major appearance.
InstanceMap canonicalize(const InstanceMap& m);

// Evaluation raster geometry. extent_x is the forward (row) span in meters,
// extent_y the lateral (column) span.
struct EvalSetting {
    double extent_x = 100.0;
    double extent_y = 100.0;
    double resolution = 0.5;

    std::int64_t nx() const;
    std::int64_t ny() const;
    void validate() const;
};

EvalSetting standard_setting(int id); // 1: 100m x 50m at 0.25m; 2: 100m x 100m at 0.5m

// |a and b| / |a or b|; 1.0 when both rasters are empty.
double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt);

struct PanopticResult {
    double rq = 0.0;
    double sq = 0.0;
    double pq = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

// IoU > 0.5 instance matching; the threshold makes matches unique.
PanopticResult panoptic_quality(const InstanceMap& pred, const InstanceMap& gt);

struct DecodeParams {
    double center_thresh = 0.3;
    double nms_radius = 2.0; // meters
    double resolution = 0.5; // meters per cell, for radius conversions
};

// Instance decoding from the three-branch head output: centerness peaks above
// the threshold survive greedy suppression (descending score, row-major tie
// break); every foreground cell is pulled by its offset vector and assigned
// to the nearest surviving center, or dropped beyond 2x the suppression
// radius.
InstanceMap decode_instances(const tc::TensorD& centerness, const tc::TensorD& offset,
                             const std::vector<std::uint8_t>& seg, const DecodeParams& params);

struct SceneMetrics {
    double iou = 0.0;
    PanopticResult panoptic;
};

SceneMetrics evaluate_scene(const std::vector<std::uint8_t>& pred_seg, const InstanceMap& pred_inst,
                            const std::vector<std::uint8_t>& gt_seg, const InstanceMap& gt_inst);

} // namespace polarbev::metrics
