#include "refpaint/trainer.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "refpaint/embedder.hpp"
#include "refpaint/error.hpp"
#include "refpaint/parallel.hpp"
#include "refpaint/rng.hpp"

namespace refpaint {

void TrainConfig::validate() const {
    require(steps >= 0, ErrorKind::parameter, "train.steps must be >= 0");
    require(batch >= 1, ErrorKind::parameter, "train.batch must be >= 1");
    require(grad_accum >= 1, ErrorKind::parameter, "train.grad_accum must be >= 1");
    require(lr > 0.0, ErrorKind::parameter, "train.lr must be positive");
    require(p_drop >= 0.0 && p_drop <= 1.0, ErrorKind::parameter, "train.p_drop must lie in [0, 1]");
    require(p_full_hole >= 0.0 && p_full_hole <= 1.0, ErrorKind::parameter, "train.p_full_hole must lie in [0, 1]");
    require(weight_decay >= 0.0, ErrorKind::parameter, "train.weight_decay must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::parameter,
            "adam betas must lie in [0, 1)");
    require(log_every >= 1, ErrorKind::parameter, "train.log_every must be >= 1");
    require(checkpoint_every >= 0, ErrorKind::parameter, "train.checkpoint_every must be >= 0");
    if (strokes) strokes->validate();
}

TrainSample prepare_sample(std::span<const Tensor> corpus, std::uint64_t index, const NoiseSchedule& sched,
                           const DenoiserConfig& model, const TrainConfig& cfg) {
    require(!corpus.empty(), ErrorKind::parameter, "training corpus is empty");
    Rng rng = Rng::derive(cfg.seed, {0x7EA1, index});
    TrainSample s;
    s.image_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1));
    s.image = corpus[s.image_index];
    require(s.image.rank() == 3 && s.image.dim(0) == model.in_channels && s.image.dim(1) == model.resolution &&
                s.image.dim(2) == model.resolution,
            ErrorKind::shape, "training image must be [C,R,R] at model resolution, got " + shape_str(s.image.shape()));

    const StrokeParams strokes = cfg.strokes ? *cfg.strokes : StrokeParams::defaults_for(model.resolution, model.resolution);
    const Mask m = maybe_full_hole(rng, generate_freeform(rng, model.resolution, model.resolution, strokes), cfg.p_full_hole);
    Quadruplet q = make_quadruplet(s.image, m);
    s.side = std::move(q.background);
    s.background_mask = q.background_mask;

    s.t = static_cast<int>(rng.uniform_int(0, sched.steps - 1));
    s.eps = Tensor::normal(s.image.shape(), rng);
    s.x_t = forward_sample(s.image, s.t, s.eps, sched);

    s.dropped = rng.bernoulli(cfg.p_drop);
    if (s.dropped) {
        s.keep.assign(static_cast<std::size_t>(model.token_count()), 0);
        s.valid = s.keep;
        s.valid[0] = 1;
    } else {
        s.keep = token_validity(q.object_mask, KeepRegion::ones_region, model.patch_size);
        s.valid = s.keep;
    }
    return s;
}

std::vector<TrainSample> prepare_batch(std::span<const Tensor> corpus, std::uint64_t first, int count,
                                       const NoiseSchedule& sched, const DenoiserConfig& model,
                                       const TrainConfig& cfg) {
    std::vector<TrainSample> out(static_cast<std::size_t>(count));
    parallel_for(out.size(), [&](std::size_t i) { out[i] = prepare_sample(corpus, first + i, sched, model, cfg); });
    return out;
}

DenoiserInputs make_inputs(ag::Graph& graph, ParamScope& scope, std::span<const TrainSample> batch,
                           const DenoiserConfig& model) {
    require(!batch.empty(), ErrorKind::shape, "empty training batch");
    std::vector<Tensor> x, side, images;
    std::vector<double> keep;
    DenoiserInputs in;
    for (const auto& s : batch) {
        x.push_back(s.x_t);
        side.push_back(s.side);
        images.push_back(s.image);
        keep.insert(keep.end(), s.keep.begin(), s.keep.end());
        in.context.valid.insert(in.context.valid.end(), s.valid.begin(), s.valid.end());
        in.t.push_back(s.t);
        in.masks.push_back(s.background_mask);
    }
    in.x_t = graph.constant(stack(x));
    in.side = graph.constant(stack(side));
    const ag::Var tokens = embed_tokens(scope, model, graph.constant(stack(images)));
    in.context.tokens = ag::mul_tokens(tokens, keep);
    return in;
}

namespace {

ag::Var batch_loss(ag::Graph& graph, ParamScope& scope, std::span<const TrainSample> batch, const DenoiserConfig& model,
                   const DenoiserFn& denoiser) {
    const DenoiserInputs in = make_inputs(graph, scope, batch, model);
    const ag::Var pred = denoiser ? denoiser(scope, in) : denoiser_forward(scope, model, in);
    std::vector<Tensor> eps;
    for (const auto& s : batch) eps.push_back(s.eps);
    const Tensor target = stack(eps);
    require(pred.shape() == target.shape(), ErrorKind::shape, "denoiser output shape does not match epsilon");
    return ag::mse(pred, target);
}

}  // namespace

double evaluate_loss(std::span<const TrainSample> batch, const ParamTable& params, const DenoiserConfig& model,
                     const DenoiserFn& denoiser) {
    ag::Graph graph(false);
    ParamScope scope(graph, params);
    return batch_loss(graph, scope, batch, model, denoiser).value()[0];
}

double train_step(std::span<const TrainSample> batch, const ParamTable& params, ParamTable& grads,
                  double grad_scale, const DenoiserConfig& model, const DenoiserFn& denoiser) {
    ag::Graph graph(true);
    ParamScope scope(graph, params);
    const ag::Var loss = batch_loss(graph, scope, batch, model, denoiser);
    const double value = loss.value()[0];
    if (std::isfinite(value)) {
        graph.backward(loss);
        scope.accumulate_grads(grads, grad_scale);
    }
    return value;
}

void AdamW::update(ParamTable& params, const ParamTable& grads) {
    ++updates_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(updates_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(updates_));
    for (auto& [name, p] : params) {
        const auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        Tensor& m = m_.try_emplace(name, Tensor::zeros(p.shape())).first->second;
        Tensor& v = v_.try_emplace(name, Tensor::zeros(p.shape())).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr_ * (weight_decay_ * p[i] + mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

Trainer::Trainer(const DenoiserConfig& model, const NoiseSchedule& sched, const TrainConfig& cfg, ParamTable params)
    : model_(model),
      sched_(sched),
      cfg_(cfg),
      params_(std::move(params)),
      optimizer_(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay) {
    model_.validate();
    cfg_.validate();
}

namespace {

void write_dump(const std::filesystem::path& dir, int step, double loss, std::span<const TrainSample> batch,
                const ParamTable& params) {
    nlohmann::json j;
    j["step"] = step;
    j["loss"] = std::isnan(loss) ? "nan" : (loss > 0 ? "inf" : "-inf");
    j["params_finite"] = all_finite(params);
    for (const auto& s : batch) {
        j["samples"].push_back({{"image_index", s.image_index},
                                {"t", s.t},
                                {"dropped", s.dropped},
                                {"hole_fraction", s.background_mask.hole_fraction()},
                                {"x_t_finite", s.x_t.all_finite()},
                                {"image_finite", s.image.all_finite()}});
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream(dir / ("nonfinite_step" + std::to_string(step) + ".json")) << j.dump(2) << '\n';
}

}  // namespace

double Trainer::step(std::span<const Tensor> corpus) {
    const auto first = static_cast<std::uint64_t>(steps_done_) * static_cast<std::uint64_t>(cfg_.batch);
    const std::vector<TrainSample> batch = prepare_batch(corpus, first, cfg_.batch, sched_, model_, cfg_);
    const double loss = train_step(batch, params_, grads_, 1.0 / cfg_.grad_accum, model_, denoiser_);
    if (!std::isfinite(loss)) {
        write_dump(dump_dir_, steps_done_, loss, batch, params_);
        raise(ErrorKind::training, "non-finite loss at step " + std::to_string(steps_done_) + "; diagnostic dump in " +
                                       dump_dir_.string());
    }
    ++steps_done_;
    if (++pending_ == cfg_.grad_accum) {
        optimizer_.update(params_, grads_);
        grads_.clear();
        pending_ = 0;
    }
    return loss;
}

}  // namespace refpaint
