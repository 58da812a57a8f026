#include "refpaint/config.hpp"

#include <fstream>
#include <sstream>

#include "json_codec.hpp"

namespace refpaint {

namespace detail {

json to_json(const DenoiserConfig& c) {
    return json{{"resolution", c.resolution},
                {"in_channels", c.in_channels},
                {"base_channels", c.base_channels},
                {"levels", c.levels},
                {"blocks_per_level", c.blocks_per_level},
                {"channel_mult", c.channel_mult},
                {"attn_levels", c.attn_levels},
                {"embed_dim", c.embed_dim},
                {"patch_size", c.patch_size},
                {"groups", c.groups},
                {"enable_ladder_side", c.enable_ladder_side},
                {"enable_mask_fusion", c.enable_mask_fusion},
                {"fusion_mask_invert", c.fusion_mask_invert}};
}

DenoiserConfig model_from_json(const json& j, const std::string& where) {
    DenoiserConfig c;
    StrictObject o(j, where);
    o.get("resolution", c.resolution);
    o.get("in_channels", c.in_channels);
    o.get("base_channels", c.base_channels);
    o.get("levels", c.levels);
    o.get("blocks_per_level", c.blocks_per_level);
    o.get("channel_mult", c.channel_mult);
    o.get("attn_levels", c.attn_levels);
    o.get("embed_dim", c.embed_dim);
    o.get("patch_size", c.patch_size);
    o.get("groups", c.groups);
    o.get("enable_ladder_side", c.enable_ladder_side);
    o.get("enable_mask_fusion", c.enable_mask_fusion);
    o.get("fusion_mask_invert", c.fusion_mask_invert);
    o.finish();
    return c;
}

json to_json(const ScheduleSpec& s) {
    return json{{"kind", "linear"}, {"steps", s.steps}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
}

ScheduleSpec schedule_from_json(const json& j, const std::string& where) {
    StrictObject o(j, where);
    std::string kind = "linear";
    o.get("kind", kind);
    require(kind == "linear", ErrorKind::configuration, where + ".kind: only \"linear\" is supported");
    int steps = 200;
    o.get("steps", steps);
    require(steps >= 2, ErrorKind::configuration, where + ".steps must be >= 2");
    ScheduleSpec s = ScheduleSpec::defaults(steps);
    o.get("beta_min", s.beta_min);
    o.get("beta_max", s.beta_max);
    o.finish();
    return s;
}

json to_json(const StrokeParams& p) {
    return json{{"min_strokes", p.min_strokes},   {"max_strokes", p.max_strokes},
                {"min_width", p.min_width},       {"max_width", p.max_width},
                {"min_vertices", p.min_vertices}, {"max_vertices", p.max_vertices},
                {"max_angle_step", p.max_angle_step}, {"min_length", p.min_length},
                {"max_length", p.max_length},     {"min_coverage", p.min_coverage},
                {"max_coverage", p.max_coverage}, {"max_retries", p.max_retries}};
}

StrokeParams strokes_from_json(const json& j, StrokeParams p, const std::string& where) {
    StrictObject o(j, where);
    o.get("min_strokes", p.min_strokes);
    o.get("max_strokes", p.max_strokes);
    o.get("min_width", p.min_width);
    o.get("max_width", p.max_width);
    o.get("min_vertices", p.min_vertices);
    o.get("max_vertices", p.max_vertices);
    o.get("max_angle_step", p.max_angle_step);
    o.get("min_length", p.min_length);
    o.get("max_length", p.max_length);
    o.get("min_coverage", p.min_coverage);
    o.get("max_coverage", p.max_coverage);
    o.get("max_retries", p.max_retries);
    o.finish();
    return p;
}

}  // namespace detail

using detail::json;
using detail::StrictObject;

void RunConfig::validate() const {
    model.validate();
    schedule.build();
    train.validate();
    require(data.source == "procedural" || data.source == "dir", ErrorKind::configuration,
            "data.source must be \"procedural\" or \"dir\"");
    require(data.source != "dir" || !data.dir.empty(), ErrorKind::configuration, "data.dir is required for source \"dir\"");
    require(data.count >= 1, ErrorKind::configuration, "data.count must be >= 1");
    require(!output.checkpoint.empty() && !output.metrics.empty(), ErrorKind::configuration,
            "output.checkpoint and output.metrics must be non-empty");
    require(pca.k >= 0 && pca.k <= model.embed_dim, ErrorKind::configuration, "pca.k must lie in [0, embed_dim]");
    require(pca.variance > 0.0 && pca.variance <= 1.0, ErrorKind::configuration, "pca.variance must lie in (0, 1]");
    require(pca.samples >= 2, ErrorKind::configuration, "pca.samples must be >= 2");
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(ErrorKind::configuration, std::string("invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    StrictObject top(root, "config");
    if (const json* m = top.child("model")) cfg.model = detail::model_from_json(*m, "model");
    if (const json* s = top.child("schedule")) cfg.schedule = detail::schedule_from_json(*s, "schedule");
    if (const json* t = top.child("train")) {
        StrictObject o(*t, "train");
        TrainConfig& tc = cfg.train;
        o.get("steps", tc.steps);
        o.get("batch", tc.batch);
        o.get("lr", tc.lr);
        o.get("grad_accum", tc.grad_accum);
        o.get("p_drop", tc.p_drop);
        o.get("p_full_hole", tc.p_full_hole);
        o.get("seed", tc.seed);
        o.get("weight_decay", tc.weight_decay);
        o.get("beta1", tc.beta1);
        o.get("beta2", tc.beta2);
        o.get("adam_eps", tc.adam_eps);
        o.get("log_every", tc.log_every);
        o.get("checkpoint_every", tc.checkpoint_every);
        o.finish();
    }
    if (const json* m = top.child("mask")) {
        cfg.train.strokes = detail::strokes_from_json(
            *m, StrokeParams::defaults_for(cfg.model.resolution, cfg.model.resolution), "mask");
    }
    if (const json* d = top.child("data")) {
        StrictObject o(*d, "data");
        o.get("source", cfg.data.source);
        o.get("dir", cfg.data.dir);
        o.get("count", cfg.data.count);
        o.get("seed", cfg.data.seed);
        o.finish();
    }
    if (const json* out = top.child("output")) {
        StrictObject o(*out, "output");
        o.get("dir", cfg.output.dir);
        o.get("checkpoint", cfg.output.checkpoint);
        o.get("metrics", cfg.output.metrics);
        o.finish();
    }
    if (const json* p = top.child("pca")) {
        StrictObject o(*p, "pca");
        o.get("fit", cfg.pca.fit);
        o.get("k", cfg.pca.k);
        o.get("variance", cfg.pca.variance);
        o.get("samples", cfg.pca.samples);
        o.finish();
    }
    top.finish();
    try {
        cfg.validate();
    } catch (const Error& e) {
        raise(ErrorKind::configuration, e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    const TrainConfig& t = cfg.train;
    json j{{"model", detail::to_json(cfg.model)},
           {"schedule", detail::to_json(cfg.schedule)},
           {"train",
            {{"steps", t.steps},
             {"batch", t.batch},
             {"lr", t.lr},
             {"grad_accum", t.grad_accum},
             {"p_drop", t.p_drop},
             {"p_full_hole", t.p_full_hole},
             {"seed", t.seed},
             {"weight_decay", t.weight_decay},
             {"beta1", t.beta1},
             {"beta2", t.beta2},
             {"adam_eps", t.adam_eps},
             {"log_every", t.log_every},
             {"checkpoint_every", t.checkpoint_every}}},
           {"data", {{"source", cfg.data.source}, {"dir", cfg.data.dir}, {"count", cfg.data.count}, {"seed", cfg.data.seed}}},
           {"output",
            {{"dir", cfg.output.dir}, {"checkpoint", cfg.output.checkpoint}, {"metrics", cfg.output.metrics}}},
           {"pca", {{"fit", cfg.pca.fit}, {"k", cfg.pca.k}, {"variance", cfg.pca.variance}, {"samples", cfg.pca.samples}}}};
    if (t.strokes) j["mask"] = detail::to_json(*t.strokes);
    return j.dump(2);
}

}  // namespace refpaint
