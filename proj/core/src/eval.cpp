#include "rangeup/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace rangeup {

Upsampler upsampler_from_string(const std::string& name) {
    if (name == "bilinear") return Upsampler::Bilinear;
    if (name == "replicate") return Upsampler::Replicate;
    if (name == "toynet") return Upsampler::ToyNet;
    if (name == "gt") return Upsampler::Gt;
    throw ConfigError("unknown upsampler '" + name + "'");
}

const char* upsampler_name(Upsampler u) {
    switch (u) {
        case Upsampler::Bilinear: return "bilinear";
        case Upsampler::Replicate: return "replicate";
        case Upsampler::ToyNet: return "toynet";
        case Upsampler::Gt: return "gt";
    }
    return "unknown";
}

void RunConfig::validate() const {
    if (factor != 2 && factor != 4) throw ConfigError("factor must be 2 or 4");
    if (frames < 1) throw ConfigError("frames must be >= 1");
    if (upsampler == Upsampler::ToyNet && factor != net.upsample_factor) {
        throw ConfigError("toynet only supports the network's upsample factor");
    }
    if (scans_dir && !fs::is_directory(*scans_dir)) {
        throw ConfigError("scans_dir does not exist: " + *scans_dir);
    }
    if (inpaint_gap < 0) throw ConfigError("inpaint_gap must be >= 0");
    loss.validate();
    bev.validate();
    metrics.voxel.validate();
    metrics.jsd.validate();
}

namespace {

double deg2rad(double d) { return d * M_PI / 180.0; }

BeamModel beams_from_json(const nlohmann::json& j) {
    if (j.contains("elevations")) {
        BeamModel bm;
        bm.elevations = j.at("elevations").get<std::vector<double>>();
        bm.offsets = j.value("offsets", std::vector<double>(bm.elevations.size(), 0.0));
        bm.max_range = j.value("max_range", kDefaultMaxRange);
        bm.validate();
        return bm;
    }
    const int count = j.value("count", 64);
    const double top = deg2rad(j.value("elev_top_deg", 24.8));
    const double bottom = deg2rad(j.value("elev_bottom_deg", -2.0));
    const double max_range = j.value("max_range", kDefaultMaxRange);
    return BeamModel::uniform(count, top, bottom, max_range);
}

} // namespace

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
    SceneSpec spec;
    spec.beams = j.contains("beams") ? beams_from_json(j.at("beams"))
                                     : BeamModel::uniform(64, deg2rad(24.8), deg2rad(-2.0),
                                                          kDefaultMaxRange);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.ground_half_extent = j.value("ground_half_extent", spec.ground_half_extent);
    spec.ground_z = j.value("ground_z", spec.ground_z);
    spec.width = j.value("width", spec.width);
    if (j.contains("boxes")) {
        const auto& b = j.at("boxes");
        spec.box_count = b.value("count", spec.box_count);
        spec.box_min_size = b.value("min_size", spec.box_min_size);
        spec.box_max_size = b.value("max_size", spec.box_max_size);
        spec.box_min_dist = b.value("min_dist", spec.box_min_dist);
        spec.box_max_dist = b.value("max_dist", spec.box_max_dist);
    }
    if (j.contains("poles")) {
        const auto& p = j.at("poles");
        spec.pole_count = p.value("count", spec.pole_count);
        spec.pole_min_radius = p.value("min_radius", spec.pole_min_radius);
        spec.pole_max_radius = p.value("max_radius", spec.pole_max_radius);
        spec.pole_min_height = p.value("min_height", spec.pole_min_height);
        spec.pole_max_height = p.value("max_height", spec.pole_max_height);
        spec.pole_min_dist = p.value("min_dist", spec.pole_min_dist);
        spec.pole_max_dist = p.value("max_dist", spec.pole_max_dist);
    }
    spec.validate();
    return spec;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.frames = j.value("frames", cfg.frames);
    cfg.factor = j.value("factor", cfg.factor);
    if (j.contains("upsampler")) {
        cfg.upsampler = upsampler_from_string(j.at("upsampler").get<std::string>());
    }
    if (j.contains("scans_dir")) cfg.scans_dir = j.at("scans_dir").get<std::string>();
    cfg.scan_beams = j.value("scan_beams", cfg.scan_beams);
    if (j.contains("scene")) cfg.scene = scene_spec_from_json(j.at("scene"));
    else cfg.scene = scene_spec_from_json(nlohmann::json::object());

    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        cfg.metrics.max_range = m.value("max_range", cfg.metrics.max_range);
        cfg.metrics.voxel.voxel_size = m.value("voxel_size", cfg.metrics.voxel.voxel_size);
        if (m.contains("voxel_bounds")) {
            const auto b = m.at("voxel_bounds").get<std::vector<double>>();
            if (b.size() != 6) throw ConfigError("voxel_bounds needs 6 numbers");
            cfg.metrics.voxel.min = {b[0], b[1], b[2]};
            cfg.metrics.voxel.max = {b[3], b[4], b[5]};
        }
        if (m.contains("jsd")) {
            const auto& h = m.at("jsd");
            cfg.metrics.jsd.x_min = h.value("x_min", cfg.metrics.jsd.x_min);
            cfg.metrics.jsd.x_max = h.value("x_max", cfg.metrics.jsd.x_max);
            cfg.metrics.jsd.y_min = h.value("y_min", cfg.metrics.jsd.y_min);
            cfg.metrics.jsd.y_max = h.value("y_max", cfg.metrics.jsd.y_max);
            cfg.metrics.jsd.bins_x = h.value("bins_x", cfg.metrics.jsd.bins_x);
            cfg.metrics.jsd.bins_y = h.value("bins_y", cfg.metrics.jsd.bins_y);
        }
        if (m.contains("depth_bins")) {
            cfg.metrics.bins.clear();
            for (const auto& b : m.at("depth_bins")) {
                cfg.metrics.bins.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
            }
        }
    }
    if (j.contains("loss")) {
        cfg.loss.alpha = j.at("loss").value("alpha", cfg.loss.alpha);
        cfg.loss.beta = j.at("loss").value("beta", cfg.loss.beta);
    }
    if (j.contains("bev")) {
        const auto& b = j.at("bev");
        cfg.bev.x_min = b.value("x_min", cfg.bev.x_min);
        cfg.bev.x_max = b.value("x_max", cfg.bev.x_max);
        cfg.bev.y_min = b.value("y_min", cfg.bev.y_min);
        cfg.bev.y_max = b.value("y_max", cfg.bev.y_max);
        cfg.bev.rows = b.value("rows", cfg.bev.rows);
        cfg.bev.cols = b.value("cols", cfg.bev.cols);
    }
    if (j.contains("maskfit")) {
        const auto& m = j.at("maskfit");
        cfg.maskfit.steps = m.value("steps", cfg.maskfit.steps);
        cfg.maskfit.learning_rate = m.value("learning_rate", cfg.maskfit.learning_rate);
        cfg.maskfit.schedule_step = m.value("schedule_step", cfg.maskfit.schedule_step);
    }
    cfg.inpaint_gap = j.value("inpaint_gap", cfg.inpaint_gap);
    if (j.contains("net")) {
        const auto& n = j.at("net");
        if (n.contains("depths")) cfg.net.depths = n.at("depths").get<std::vector<int>>();
        cfg.net.base_channels = n.value("base_channels", cfg.net.base_channels);
        cfg.net.state_dim = n.value("state_dim", cfg.net.state_dim);
        cfg.net.se_reduction = n.value("se_reduction", cfg.net.se_reduction);
        cfg.net.heads = n.value("heads", cfg.net.heads);
        cfg.net.win_h = n.value("win_h", cfg.net.win_h);
        cfg.net.win_w = n.value("win_w", cfg.net.win_w);
    }
    if (j.contains("weights")) cfg.weights_path = j.at("weights").get<std::string>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config JSON in " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

namespace {

RangeImage normalized_copy(const RangeImage& img, double max_range) {
    RangeImage out = img;
    for (auto& d : out.depth) d /= max_range;
    return out;
}

RangeImage toynet_upsample(const RangeImage& sparse, const RunConfig& cfg) {
    net::Weights weights = cfg.weights_path ? net::load_weights(*cfg.weights_path)
                                            : net::init_weights(cfg.net, cfg.seed);
    const double max_range = sparse.beam_model.max_range;
    const RangeImage normalized = normalized_copy(sparse, max_range);
    RangeImage out = net::forward(normalized, weights);
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
        const double metric = std::min(out.depth[i], 1.0) * max_range;
        out.depth[i] = 0.0;
        out.valid[i] = 0;
        if (metric > 0.0) {
            out.depth[i] = metric;
            out.valid[i] = 1;
        }
    }
    return out;
}

} // namespace

RangeImage apply_upsampler(const RangeImage& sparse, const RunConfig& cfg,
                           const RangeImage* gt_for_oracle) {
    switch (cfg.upsampler) {
        case Upsampler::Bilinear: return bilinear_upsample_vertical(sparse, cfg.factor);
        case Upsampler::Replicate: return replicate_upsample_vertical(sparse, cfg.factor);
        case Upsampler::ToyNet: return toynet_upsample(sparse, cfg);
        case Upsampler::Gt:
            if (!gt_for_oracle) throw ConfigError("gt upsampler needs a ground-truth image");
            return *gt_for_oracle;
    }
    throw ConfigError("unknown upsampler");
}

namespace {

struct FrameInput {
    std::string id;
    RangeImage hr;
};

std::vector<std::string> list_scan_files(const std::string& dir, int limit) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".bin" || ext == ".scan") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (static_cast<int>(files.size()) > limit) files.resize(limit);
    return files;
}

FrameInput load_scan_frame(const RunConfig& cfg, const std::string& path) {
    FrameInput frame;
    frame.id = fs::path(path).stem().string();
    const PointCloud cloud = load_scan(path);
    BeamModel bm = estimate_beam_model(cloud, cfg.scan_beams);
    bm.max_range = cfg.metrics.max_range;
    frame.hr = spherical_project(cloud, bm, cfg.scene.width);
    return frame;
}

FrameInput synth_frame(const RunConfig& cfg, int index) {
    FrameInput frame;
    frame.id = "frame_" + std::to_string(index);
    SceneSpec spec = cfg.scene;
    spec.seed = cfg.seed + static_cast<std::uint64_t>(index);
    const PointCloud cloud = synth_scene(spec);
    if (cloud.empty()) throw ArgumentError("scene produced no returns");
    frame.hr = spherical_project(cloud, spec.beams, spec.width);
    return frame;
}

void accumulate(std::vector<double>& sums, std::vector<std::size_t>& counts, std::size_t col,
                const std::optional<double>& value) {
    if (!value) return;
    sums[col] += *value;
    ++counts[col];
}

} // namespace

EvalOutput run_eval(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);

    std::vector<std::string> scan_files;
    int frame_count = cfg.frames;
    if (cfg.scans_dir) {
        scan_files = list_scan_files(*cfg.scans_dir, cfg.frames);
        if (scan_files.empty()) throw ConfigError("no scan files under " + *cfg.scans_dir);
        frame_count = static_cast<int>(scan_files.size());
    }

    EvalOutput out;
    out.csv_path = (fs::path(cfg.output_dir) / "frames.csv").string();
    out.report_path = (fs::path(cfg.output_dir) / "report.json").string();

    std::ofstream csv(out.csv_path, std::ios::trunc);
    if (!csv) throw FormatError("cannot open " + out.csv_path + " for writing");
    csv << MetricsReport::csv_header(cfg.metrics.bins) << '\n';

    // Column-wise accumulators: iou, cd, mae, jsd, then per-bin iou/cd.
    const std::size_t ncols = 4 + 2 * cfg.metrics.bins.size();
    std::vector<double> sums(ncols, 0.0);
    std::vector<std::size_t> counts(ncols, 0);

    for (int f = 0; f < frame_count; ++f) {
        FrameResult result;
        try {
            FrameInput frame =
                cfg.scans_dir ? load_scan_frame(cfg, scan_files[f]) : synth_frame(cfg, f);
            result.id = frame.id;

            RangeImage sparse = downsample_rows(frame.hr, cfg.factor);
            sparse = inpaint(sparse, cfg.inpaint_gap);
            const RangeImage pred = apply_upsampler(sparse, cfg, &frame.hr);

            const PointCloud pred_cloud = back_project(pred);
            const PointCloud gt_cloud = back_project(frame.hr);

            result.report =
                stratified_eval(pred_cloud, gt_cloud, cfg.metrics.bins, cfg.metrics.voxel);
            result.report.mae = image_mae(pred, frame.hr, cfg.metrics.max_range);
            result.report.jsd = jsd_bev(pred_cloud, gt_cloud, cfg.metrics.jsd);
            result.ok = true;
        } catch (const Error& e) {
            result.ok = false;
            result.message = e.what();
            if (result.id.empty()) result.id = "frame_" + std::to_string(f);
        }

        if (result.ok) {
            csv << result.report.csv_row(result.id) << '\n';
            accumulate(sums, counts, 0, result.report.iou);
            accumulate(sums, counts, 1, result.report.cd);
            accumulate(sums, counts, 2, result.report.mae);
            accumulate(sums, counts, 3, result.report.jsd);
            for (std::size_t b = 0; b < result.report.per_bin.size(); ++b) {
                accumulate(sums, counts, 4 + 2 * b, result.report.per_bin[b].iou);
                accumulate(sums, counts, 5 + 2 * b, result.report.per_bin[b].cd);
            }
        } else {
            ++out.failed;
        }
        out.frames.push_back(std::move(result));
    }

    if (out.failed == out.frames.size()) {
        throw MetricError("every frame failed; no aggregate to report");
    }

    const auto mean_of = [&](std::size_t col) -> std::optional<double> {
        if (counts[col] == 0) return std::nullopt;
        return sums[col] / static_cast<double>(counts[col]);
    };
    out.aggregate.iou = mean_of(0).value_or(0.0);
    out.aggregate.cd = mean_of(1).value_or(0.0);
    out.aggregate.mae = mean_of(2);
    out.aggregate.jsd = mean_of(3);
    for (std::size_t b = 0; b < cfg.metrics.bins.size(); ++b) {
        BinMetrics bm;
        bm.bin = cfg.metrics.bins[b];
        bm.iou = mean_of(4 + 2 * b);
        bm.cd = mean_of(5 + 2 * b);
        for (const auto& fr : out.frames) {
            if (!fr.ok) continue;
            bm.n_pred += fr.report.per_bin[b].n_pred;
            bm.n_gt += fr.report.per_bin[b].n_gt;
        }
        out.aggregate.per_bin.push_back(bm);
    }
    csv << out.aggregate.csv_row("mean") << '\n';

    nlohmann::json report;
    report["schema"] = 1;
    report["seed"] = cfg.seed;
    report["upsampler"] = upsampler_name(cfg.upsampler);
    report["factor"] = cfg.factor;
    report["frames_total"] = out.frames.size();
    report["frames_failed"] = out.failed;
    report["aggregate"] = out.aggregate.to_json();
    auto jframes = nlohmann::json::array();
    for (const auto& fr : out.frames) {
        nlohmann::json jf;
        jf["id"] = fr.id;
        jf["ok"] = fr.ok;
        if (fr.ok) jf["metrics"] = fr.report.to_json();
        else jf["error"] = fr.message;
        jframes.push_back(jf);
    }
    report["frames"] = jframes;

    std::ofstream js(out.report_path, std::ios::trunc);
    if (!js) throw FormatError("cannot open " + out.report_path + " for writing");
    js << report.dump(2) << '\n';
    return out;
}

MaskFitResult fit_mask(const std::vector<std::pair<RangeImage, RangeImage>>& pairs,
                       const LossWeights& weights, const BevGridSpec& bev,
                       const MaskFitConfig& fit) {
    if (pairs.empty()) throw ArgumentError("mask fit needs at least one (pred, gt) pair");
    const int h = pairs.front().first.height;
    for (const auto& [pred, gt] : pairs) {
        if (pred.height != h || gt.height != h || pred.width != gt.width) {
            throw ArgumentError("mask fit pairs must share dimensions");
        }
    }

    MaskFitResult result;
    result.fitted.raw.assign(h, 0.0);
    result.trace.reserve(fit.steps);

    const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
    for (int step = 0; step < fit.steps; ++step) {
        LossWeights active = weights;
        if (step < fit.schedule_step) {
            active.alpha = 0.0;
            active.beta = 0.0;
        }
        double loss_sum = 0.0;
        std::vector<double> grad(h, 0.0);
        for (const auto& [pred, gt] : pairs) {
            const LossValueGrad lv = total_loss(pred, gt, result.fitted, active, bev);
            loss_sum += lv.value;
            for (std::size_t v = 0; v < lv.grad_mask.size(); ++v) grad[v] += lv.grad_mask[v];
        }
        const double loss = loss_sum * inv_pairs;
        result.trace.push_back(loss);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            break;
        }
        for (int v = 0; v < h; ++v) {
            result.fitted.raw[v] -= fit.learning_rate * grad[v] * inv_pairs;
        }
    }
    result.row_weights = mask_row_weights(result.fitted);
    return result;
}

MaskFitResult run_mask_fit(const RunConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<RangeImage, RangeImage>> pairs;
    for (int f = 0; f < cfg.frames; ++f) {
        const FrameInput frame = synth_frame(cfg, f);
        RangeImage sparse = downsample_rows(frame.hr, cfg.factor);
        sparse = inpaint(sparse, cfg.inpaint_gap);
        const RangeImage pred = apply_upsampler(sparse, cfg, &frame.hr);
        pairs.emplace_back(normalized_copy(pred, cfg.metrics.max_range),
                           normalized_copy(frame.hr, cfg.metrics.max_range));
    }
    MaskFitResult result = fit_mask(pairs, cfg.loss, cfg.bev, cfg.maskfit);

    fs::create_directories(cfg.output_dir);
    const auto trace_path = (fs::path(cfg.output_dir) / "maskfit_trace.csv").string();
    std::ofstream trace(trace_path, std::ios::trunc);
    trace << "step,loss\n";
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        trace << i << ',' << result.trace[i] << '\n';
    }
    nlohmann::json j;
    j["schema"] = 1;
    j["diverged"] = result.diverged;
    j["raw"] = result.fitted.raw;
    j["row_weights"] = result.row_weights;
    std::ofstream mask((fs::path(cfg.output_dir) / "mask.json").string(), std::ios::trunc);
    mask << j.dump(2) << '\n';
    return result;
}

} // namespace rangeup
