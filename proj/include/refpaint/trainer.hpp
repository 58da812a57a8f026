#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "refpaint/denoiser.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/params.hpp"
#include "refpaint/schedule.hpp"

namespace refpaint {

struct TrainConfig {
    int steps = 2000;
    int batch = 4;
    double lr = 1e-4;
    int grad_accum = 4;
    double p_drop = 0.1;
    double p_full_hole = 0.25;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int log_every = 50;
    int checkpoint_every = 0;  ///< 0 = only at the end
    std::optional<StrokeParams> strokes;  ///< defaults_for(resolution) when unset

    void validate() const;
};

/// Everything random about one training example, drawn from a stream keyed
/// by (seed, global sample index).
struct TrainSample {
    std::size_t image_index = 0;
    Tensor image;    ///< I
    Tensor side;     ///< I_bg
    Mask background_mask;
    std::vector<std::uint8_t> keep;   ///< tokens of I inside the hole, i.e. the tokens of I_o
    std::vector<std::uint8_t> valid;  ///< attention validity (phi when dropped)
    bool dropped = false;
    int t = 0;
    Tensor eps;
    Tensor x_t;
};

TrainSample prepare_sample(std::span<const Tensor> corpus, std::uint64_t index, const NoiseSchedule& sched,
                           const DenoiserConfig& model, const TrainConfig& cfg);

/// Samples for global indices [first, first + count), prepared in parallel.
std::vector<TrainSample> prepare_batch(std::span<const Tensor> corpus, std::uint64_t first, int count,
                                       const NoiseSchedule& sched, const DenoiserConfig& model,
                                       const TrainConfig& cfg);

/// Replaces the denoiser in train_step; the default is denoiser_forward.
using DenoiserFn = std::function<ag::Var(ParamScope&, const DenoiserInputs&)>;

/// Batch-mean squared epsilon residual. Adds d(loss)/d(param) * grad_scale
/// into `grads` (created on first use) and returns the loss.
double train_step(std::span<const TrainSample> batch, const ParamTable& params, ParamTable& grads,
                  double grad_scale, const DenoiserConfig& model, const DenoiserFn& denoiser = {});

/// The train_step loss without gradients.
double evaluate_loss(std::span<const TrainSample> batch, const ParamTable& params, const DenoiserConfig& model,
                     const DenoiserFn& denoiser = {});

/// Stacks sample fields into the denoiser's batched inputs.
DenoiserInputs make_inputs(ag::Graph& graph, ParamScope& scope, std::span<const TrainSample> batch,
                           const DenoiserConfig& model);

class AdamW {
public:
    AdamW(double lr, double beta1, double beta2, double eps, double weight_decay)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    /// Decoupled weight decay on every tensor, then the bias-corrected Adam step.
    void update(ParamTable& params, const ParamTable& grads);
    long updates() const noexcept { return updates_; }

private:
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    long updates_ = 0;
    ParamTable m_, v_;
};

/// Gradient accumulation plus AdamW over a fixed corpus. One call to step()
/// is one train_step; an update is applied every grad_accum calls.
class Trainer {
public:
    Trainer(const DenoiserConfig& model, const NoiseSchedule& sched, const TrainConfig& cfg, ParamTable params);

    double step(std::span<const Tensor> corpus);

    const ParamTable& params() const noexcept { return params_; }
    int steps_done() const noexcept { return steps_done_; }
    long updates() const noexcept { return optimizer_.updates(); }

    void set_denoiser(DenoiserFn fn) { denoiser_ = std::move(fn); }
    void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

private:
    DenoiserConfig model_;
    NoiseSchedule sched_;
    TrainConfig cfg_;
    ParamTable params_;
    ParamTable grads_;
    AdamW optimizer_;
    DenoiserFn denoiser_;
    std::filesystem::path dump_dir_ = ".";
    int steps_done_ = 0;
    int pending_ = 0;
};

}  // namespace refpaint
