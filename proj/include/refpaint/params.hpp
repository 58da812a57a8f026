#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "refpaint/autograd.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/tensor.hpp"

namespace refpaint {

/// Named tensor table holding every learnable tensor (UNet, ladder-side
/// encoder, timestep MLP, attention projections and embedder). Ordered by
/// name, which fixes the checkpoint layout.
using ParamTable = std::map<std::string, Tensor>;

/// Truncated-normal(0.02) weights, zero biases, unit group-norm gains and a
/// zero output convolution.
ParamTable init_params(const DenoiserConfig& cfg, std::uint64_t seed);

std::int64_t param_count(const ParamTable& params);
bool all_finite(const ParamTable& params);

/// Binds parameters into a graph on first use so that one forward pass
/// creates one leaf per tensor.
class ParamScope {
public:
    ParamScope(ag::Graph& graph, const ParamTable& params) : graph_(graph), params_(params) {}

    ag::Graph& graph() const noexcept { return graph_; }
    ag::Var operator()(const std::string& name);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    /// Adds d(loss)/d(param) * scale into `grads` for every bound parameter.
    void accumulate_grads(ParamTable& grads, double scale = 1.0) const;

private:
    ag::Graph& graph_;
    const ParamTable& params_;
    std::map<std::string, ag::Var> bound_;
};

}  // namespace refpaint
