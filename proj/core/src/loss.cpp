#include "rangeup/loss.hpp"

#include <algorithm>
#include <cmath>

namespace rangeup {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ArgumentError("loss weights must be nonnegative");
    if (!std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ArgumentError("loss weights must be finite");
    }
}

void BevGridSpec::validate() const {
    if (!(x_max > x_min) || !(y_max > y_min)) throw ArgumentError("bev ranges must be non-degenerate");
    if (rows < 1 || cols < 1) throw ArgumentError("bev grid dims must be >= 1");
}

double BevGrid::total_mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

namespace {

void require_same_dims(const RangeImage& a, const RangeImage& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw ArgumentError(std::string(what) + ": dimension mismatch");
    }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Splitting sum: exact for equal summands when n is a power of two.
double pairwise_sum(const double* a, std::size_t n) {
    if (n == 0) return 0.0;
    if (n == 1) return a[0];
    if (n == 2) return a[0] + a[1];
    const std::size_t mid = n / 2;
    return pairwise_sum(a, mid) + pairwise_sum(a + mid, n - mid);
}

} // namespace

LossValueGrad l1_loss(const RangeImage& pred, const RangeImage& gt) {
    require_same_dims(pred, gt, "l1_loss");
    const std::size_t n = pred.depth.size();
    LossValueGrad out;
    out.height = pred.height;
    out.width = pred.width;
    out.grad_image.resize(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = pred.depth[i] - gt.depth[i];
        sum += std::abs(r);
        out.grad_image[i] = sign(r) * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

std::vector<double> mask_row_weights(const MaskParams& params) {
    const std::size_t h = params.raw.size();
    if (h == 0) throw ArgumentError("mask params must have at least one row");
    std::vector<double> w(h);
    for (std::size_t v = 0; v < h; ++v) {
        if (!std::isfinite(params.raw[v])) throw ArgumentError("mask params must be finite");
        w[v] = softplus(params.raw[v]);
    }
    const double mean = pairwise_sum(w.data(), h) / static_cast<double>(h);
    for (auto& x : w) x /= mean;
    return w;
}

std::vector<double> mask_from_params(const MaskParams& params, int width) {
    if (width < 1) throw ArgumentError("mask width must be >= 1");
    const auto rows = mask_row_weights(params);
    std::vector<double> mask(rows.size() * width);
    for (std::size_t v = 0; v < rows.size(); ++v) {
        std::fill_n(mask.begin() + v * width, width, rows[v]);
    }
    return mask;
}

LossValueGrad adaptive_l1(const RangeImage& pred, const RangeImage& gt,
                          const MaskParams& params) {
    require_same_dims(pred, gt, "adaptive_l1");
    if (static_cast<int>(params.raw.size()) != pred.height) {
        throw ArgumentError("adaptive_l1: mask params length must equal image height");
    }
    const int h = pred.height;
    const int w = pred.width;
    const std::size_t n = pred.depth.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> sp(params.raw.size());
    for (std::size_t v = 0; v < sp.size(); ++v) {
        if (!std::isfinite(params.raw[v])) throw ArgumentError("mask params must be finite");
        sp[v] = softplus(params.raw[v]);
    }
    const double mean = pairwise_sum(sp.data(), sp.size()) / static_cast<double>(h);
    std::vector<double> m(sp.size());
    for (std::size_t v = 0; v < sp.size(); ++v) m[v] = sp[v] / mean;

    LossValueGrad out;
    out.height = h;
    out.width = w;
    out.grad_image.resize(n);
    out.grad_mask.resize(h);

    std::vector<double> row_residual(h, 0.0); // R_v = sum_u |pred - gt|
    double sum = 0.0;
    for (int v = 0; v < h; ++v) {
        double rsum = 0.0;
        for (int u = 0; u < w; ++u) {
            const std::size_t i = pred.idx(v, u);
            const double r = pred.depth[i] - gt.depth[i];
            rsum += std::abs(r);
            sum += m[v] * std::abs(r);
            out.grad_image[i] = m[v] * sign(r) * inv_n;
        }
        row_residual[v] = rsum;
    }
    out.value = sum * inv_n;

    // d(value)/d(raw_j) through m_j = softplus(raw_j) / mean(softplus(raw)).
    double weighted = 0.0; // sum_v m_v R_v
    for (int v = 0; v < h; ++v) weighted += m[v] * row_residual[v];
    for (int v = 0; v < h; ++v) {
        const double dvalue_dw =
            inv_n / mean * (row_residual[v] - weighted / static_cast<double>(h));
        out.grad_mask[v] = sigmoid(params.raw[v]) * dvalue_dw;
    }
    return out;
}

SoftRaster soft_bev_raster(const RangeImage& img, const BevGridSpec& spec) {
    spec.validate();
    img.beam_model.validate();
    if (img.height != img.beam_model.rows()) {
        throw ArgumentError("soft_bev_raster: image height does not match beam model");
    }

    SoftRaster out;
    out.grid.rows = spec.rows;
    out.grid.cols = spec.cols;
    out.grid.spec = spec;
    out.grid.values.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0.0);

    const double range_scale = img.beam_model.max_range;
    const double rx = spec.res_x();
    const double ry = spec.res_y();

    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            if (!img.is_valid(v, u)) continue;
            const std::size_t pix = img.idx(v, u);
            const double depth = img.depth[pix] * range_scale;
            const CellRay ray = cell_ray(img.beam_model, v, u, img.width);
            const Vec3 p = cell_point(ray, depth);
            const Vec3 jac = cell_point_depth_jacobian(ray, depth);

            double cx = (p.x - spec.x_min) / rx - 0.5;
            double cy = (p.y - spec.y_min) / ry - 0.5;
            double dcx = jac.x / rx * range_scale;
            double dcy = jac.y / ry * range_scale;
            if (cx <= 0.0) { cx = 0.0; dcx = 0.0; }
            if (cx >= spec.rows - 1) { cx = spec.rows - 1; dcx = 0.0; }
            if (cy <= 0.0) { cy = 0.0; dcy = 0.0; }
            if (cy >= spec.cols - 1) { cy = spec.cols - 1; dcy = 0.0; }

            int i0 = std::min(static_cast<int>(cx), spec.rows - 2);
            int j0 = std::min(static_cast<int>(cy), spec.cols - 2);
            if (spec.rows == 1) i0 = 0;
            if (spec.cols == 1) j0 = 0;
            const double tx = cx - i0;
            const double ty = cy - j0;

            PixelSplat splat;
            splat.pixel = pix;
            const auto cell = [&](int i, int j) {
                return static_cast<std::size_t>(std::min(i, spec.rows - 1)) * spec.cols +
                       std::min(j, spec.cols - 1);
            };
            splat.cell = {cell(i0, j0), cell(i0, j0 + 1), cell(i0 + 1, j0), cell(i0 + 1, j0 + 1)};
            splat.weight = {(1.0 - tx) * (1.0 - ty), (1.0 - tx) * ty, tx * (1.0 - ty), tx * ty};
            splat.dweight_dvalue = {
                -dcx * (1.0 - ty) - dcy * (1.0 - tx),
                -dcx * ty + dcy * (1.0 - tx),
                dcx * (1.0 - ty) - dcy * tx,
                dcx * ty + dcy * tx,
            };
            for (int k = 0; k < 4; ++k) out.grid.values[splat.cell[k]] += splat.weight[k];
            out.splats.push_back(splat);
        }
    }
    return out;
}

LossValueGrad bev_loss(const RangeImage& pred, const RangeImage& gt, const BevGridSpec& spec) {
    require_same_dims(pred, gt, "bev_loss");
    const SoftRaster rp = soft_bev_raster(pred, spec);
    const SoftRaster rg = soft_bev_raster(gt, spec);

    const std::size_t cells = rp.grid.values.size();
    const double inv_cells = 1.0 / static_cast<double>(cells);

    LossValueGrad out;
    out.height = pred.height;
    out.width = pred.width;
    out.grad_image.assign(pred.depth.size(), 0.0);

    double sum = 0.0;
    std::vector<double> cell_sign(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        const double d = rp.grid.values[i] - rg.grid.values[i];
        sum += std::abs(d);
        cell_sign[i] = sign(d);
    }
    out.value = sum * inv_cells;

    for (const auto& splat : rp.splats) {
        double g = 0.0;
        for (int k = 0; k < 4; ++k) {
            g += cell_sign[splat.cell[k]] * splat.dweight_dvalue[k];
        }
        out.grad_image[splat.pixel] += g * inv_cells;
    }
    return out;
}

LossValueGrad total_loss(const RangeImage& pred, const RangeImage& gt, const MaskParams& params,
                         const LossWeights& weights, const BevGridSpec& spec) {
    weights.validate();
    LossValueGrad out = l1_loss(pred, gt);
    if (weights.beta > 0.0) {
        const LossValueGrad ad = adaptive_l1(pred, gt, params);
        out.value += weights.beta * ad.value;
        for (std::size_t i = 0; i < out.grad_image.size(); ++i) {
            out.grad_image[i] += weights.beta * ad.grad_image[i];
        }
        out.grad_mask.resize(ad.grad_mask.size());
        for (std::size_t v = 0; v < ad.grad_mask.size(); ++v) {
            out.grad_mask[v] = weights.beta * ad.grad_mask[v];
        }
    }
    if (weights.alpha > 0.0) {
        const LossValueGrad bv = bev_loss(pred, gt, spec);
        out.value += weights.alpha * bv.value;
        for (std::size_t i = 0; i < out.grad_image.size(); ++i) {
            out.grad_image[i] += weights.alpha * bv.grad_image[i];
        }
    }
    return out;
}

const char* loss_op_name(LossOp op) {
    switch (op) {
        case LossOp::L1: return "l1";
        case LossOp::AdaptiveL1: return "adaptive_l1";
        case LossOp::Bev: return "bev";
        case LossOp::Total: return "total";
    }
    return "unknown";
}

namespace {

LossValueGrad eval_op(LossOp op, const LossInstance& inst) {
    switch (op) {
        case LossOp::L1: return l1_loss(inst.pred, inst.gt);
        case LossOp::AdaptiveL1: return adaptive_l1(inst.pred, inst.gt, inst.params);
        case LossOp::Bev: return bev_loss(inst.pred, inst.gt, inst.bev);
        case LossOp::Total:
            return total_loss(inst.pred, inst.gt, inst.params, inst.weights, inst.bev);
    }
    throw ArgumentError("unknown loss op");
}

} // namespace

GradCheckReport grad_check(LossOp op, const LossInstance& inst, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ArgumentError("grad_check eps must lie in [1e-7, 1e-3]");
    }
    constexpr double kDeadZone = 1e-10;

    GradCheckReport report;
    report.op = loss_op_name(op);
    report.eps = eps;

    const LossValueGrad analytic = eval_op(op, inst);

    LossInstance work = inst;
    for (std::size_t i = 0; i < work.pred.depth.size(); ++i) {
        if (std::abs(analytic.grad_image[i]) <= kDeadZone) continue;
        const double saved = work.pred.depth[i];
        work.pred.depth[i] = saved + eps;
        const double plus = eval_op(op, work).value;
        work.pred.depth[i] = saved - eps;
        const double minus = eval_op(op, work).value;
        work.pred.depth[i] = saved;
        const double fd = (plus - minus) / (2.0 * eps);
        const double rel = std::abs(fd - analytic.grad_image[i]) / std::abs(analytic.grad_image[i]);
        report.max_rel_error_image = std::max(report.max_rel_error_image, rel);
        ++report.checked;
    }
    for (std::size_t v = 0; v < analytic.grad_mask.size(); ++v) {
        if (std::abs(analytic.grad_mask[v]) <= kDeadZone) continue;
        const double saved = work.params.raw[v];
        work.params.raw[v] = saved + eps;
        const double plus = eval_op(op, work).value;
        work.params.raw[v] = saved - eps;
        const double minus = eval_op(op, work).value;
        work.params.raw[v] = saved;
        const double fd = (plus - minus) / (2.0 * eps);
        const double rel = std::abs(fd - analytic.grad_mask[v]) / std::abs(analytic.grad_mask[v]);
        report.max_rel_error_mask = std::max(report.max_rel_error_mask, rel);
        ++report.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error_image, report.max_rel_error_mask);
    return report;
}

nlohmann::json LossValueGrad::to_json() const {
    nlohmann::json j;
    j["value"] = value;
    j["height"] = height;
    j["width"] = width;
    j["grad_image"] = grad_image;
    if (!grad_mask.empty()) j["grad_mask"] = grad_mask;
    return j;
}

nlohmann::json GradCheckReport::to_json() const {
    nlohmann::json j;
    j["op"] = op;
    j["eps"] = eps;
    j["max_rel_error"] = max_rel_error;
    j["max_rel_error_image"] = max_rel_error_image;
    j["max_rel_error_mask"] = max_rel_error_mask;
    j["checked"] = checked;
    return j;
}

} // namespace rangeup
