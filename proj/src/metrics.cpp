#include "polarbev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace polarbev::metrics {

std::int32_t InstanceMap::max_id() const {
    std::int32_t m = 0;
    for (auto v : labels) m = std::max(m, v);
    return m;
}

InstanceMap canonicalize(const InstanceMap& m) {
    InstanceMap out;
    out.rows = m.rows;
    out.cols = m.cols;
    out.labels.assign(m.labels.size(), 0);
    std::unordered_map<std::int32_t, std::int32_t> remap;
    std::int32_t next = 1;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        const std::int32_t v = m.labels[i];
        if (v == 0) continue;
        auto it = remap.find(v);
        if (it == remap.end()) {
            it = remap.emplace(v, next++).first;
        }
        out.labels[i] = it->second;
    }
    return out;
}

std::int64_t EvalSetting::nx() const { return static_cast<std::int64_t>(std::llround(extent_x / resolution)); }
std::int64_t EvalSetting::ny() const { return static_cast<std::int64_t>(std::llround(extent_y / resolution)); }

void EvalSetting::validate() const {
    if (!(resolution > 0.0)) throw ConfigError("eval setting: resolution must be positive");
    const double rx = extent_x / resolution;
    const double ry = extent_y / resolution;
    if (std::abs(rx - std::round(rx)) > 1e-9 || std::abs(ry - std::round(ry)) > 1e-9) {
        throw ConfigError("eval setting: extents must be divisible by the resolution");
    }
}

EvalSetting standard_setting(int id) {
    if (id == 1) return EvalSetting{100.0, 50.0, 0.25};
    if (id == 2) return EvalSetting{100.0, 100.0, 0.5};
    throw ConfigError("unknown eval setting " + std::to_string(id));
}

double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size()) {
        throw DimensionError("iou: raster sizes " + std::to_string(pred.size()) + " and " +
                             std::to_string(gt.size()) + " differ");
    }
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool g = gt[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

PanopticResult panoptic_quality(const InstanceMap& pred_in, const InstanceMap& gt_in) {
    if (pred_in.rows != gt_in.rows || pred_in.cols != gt_in.cols) {
        throw DimensionError("panoptic_quality: map shapes differ");
    }
    const InstanceMap pred = canonicalize(pred_in);
    const InstanceMap gt = canonicalize(gt_in);

    std::unordered_map<std::int32_t, std::int64_t> pred_area, gt_area;
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> inter;
    for (std::int64_t i = 0; i < pred.cells(); ++i) {
        const std::int32_t p = pred.labels[i];
        const std::int32_t g = gt.labels[i];
        if (p > 0) ++pred_area[p];
        if (g > 0) ++gt_area[g];
        if (p > 0 && g > 0) ++inter[{g, p}];
    }

    PanopticResult res;
    double sq_sum = 0.0;
    std::unordered_map<std::int32_t, bool> pred_matched;
    // iterate in gt-id order for a deterministic IoU summation order
    std::int64_t matched_gt = 0;
    for (std::int32_t g = 1; g <= gt.max_id(); ++g) {
        for (const auto& [key, icount] : inter) {
            if (key.first != g) continue;
            const std::int32_t p = key.second;
            const double u = static_cast<double>(gt_area[g] + pred_area[p] - icount);
            const double pair_iou = static_cast<double>(icount) / u;
            if (pair_iou > 0.5) {
                // IoU > 0.5 admits at most one partner per instance
                sq_sum += pair_iou;
                pred_matched[p] = true;
                ++matched_gt;
                break;
            }
        }
    }
    res.tp = matched_gt;
    res.fn = static_cast<std::int64_t>(gt_area.size()) - matched_gt;
    res.fp = static_cast<std::int64_t>(pred_area.size()) -
             static_cast<std::int64_t>(pred_matched.size());

    if (res.tp == 0) {
        res.sq = (res.fp == 0 && res.fn == 0) ? 1.0 : 0.0;
        res.rq = (res.fp == 0 && res.fn == 0) ? 1.0 : 0.0;
    } else {
        res.sq = sq_sum / static_cast<double>(res.tp);
        res.rq = static_cast<double>(res.tp) /
                 (static_cast<double>(res.tp) + 0.5 * static_cast<double>(res.fp) +
                  0.5 * static_cast<double>(res.fn));
    }
    res.pq = res.sq * res.rq;
    return res;
}

InstanceMap decode_instances(const tc::TensorD& centerness, const tc::TensorD& offset,
                             const std::vector<std::uint8_t>& seg, const DecodeParams& params) {
    if (centerness.rank() != 2) {
        throw DimensionError("decode_instances: centerness must be [h x w], got " +
                             tc::shape_str(centerness.shape()));
    }
    const std::int64_t rows = centerness.dim(0), cols = centerness.dim(1);
    if (offset.rank() != 3 || offset.dim(0) != 2 || offset.dim(1) != rows || offset.dim(2) != cols ||
        static_cast<std::int64_t>(seg.size()) != rows * cols) {
        throw DimensionError("decode_instances: raster shapes disagree");
    }

    // local maxima over the 8-neighborhood, strictly above the threshold
    struct Peak {
        double score;
        std::int64_t r, c;
    };
    std::vector<Peak> peaks;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            const double v = centerness(r, c);
            if (v < params.center_thresh) continue;
            bool is_max = true;
            for (std::int64_t dr = -1; dr <= 1 && is_max; ++dr) {
                for (std::int64_t dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const std::int64_t rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    const double nv = centerness(rr, cc);
                    // row-major earlier cell wins plateaus
                    if (nv > v || (nv == v && (rr * cols + cc) < (r * cols + c))) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) peaks.push_back({v, r, c});
        }
    }
    std::sort(peaks.begin(), peaks.end(), [cols](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.r * cols + a.c < b.r * cols + b.c;
    });

    const double nms_cells = params.nms_radius / params.resolution;
    std::vector<Peak> centers;
    for (const auto& p : peaks) {
        bool keep = true;
        for (const auto& kept : centers) {
            const double dr = static_cast<double>(p.r - kept.r);
            const double dc = static_cast<double>(p.c - kept.c);
            if (std::hypot(dr, dc) <= nms_cells) {
                keep = false;
                break;
            }
        }
        if (keep) centers.push_back(p);
    }

    InstanceMap out;
    out.rows = rows;
    out.cols = cols;
    out.labels.assign(static_cast<std::size_t>(rows * cols), 0);
    if (centers.empty()) return out;

    const double cutoff_cells = 2.0 * nms_cells;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            if (!seg[r * cols + c]) continue;
            // offset is stored in meters along (row, col) axes
            const double tr = static_cast<double>(r) + offset(0, r, c) / params.resolution;
            const double tcol = static_cast<double>(c) + offset(1, r, c) / params.resolution;
            double best = cutoff_cells;
            std::int32_t best_id = 0;
            for (std::size_t ci = 0; ci < centers.size(); ++ci) {
                const double d = std::hypot(tr - static_cast<double>(centers[ci].r),
                                            tcol - static_cast<double>(centers[ci].c));
                if (d < best) {
                    best = d;
                    best_id = static_cast<std::int32_t>(ci) + 1;
                }
            }
            out.labels[r * cols + c] = best_id;
        }
    }
    return canonicalize(out);
}

SceneMetrics evaluate_scene(const std::vector<std::uint8_t>& pred_seg, const InstanceMap& pred_inst,
                            const std::vector<std::uint8_t>& gt_seg, const InstanceMap& gt_inst) {
    SceneMetrics m;
    m.iou = iou(pred_seg, gt_seg);
    m.panoptic = panoptic_quality(pred_inst, gt_inst);
    return m;
}

} // namespace polarbev::metrics
