#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include "refpaint/checkpoint.hpp"
#include "refpaint/embedder.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/schedule.hpp"

namespace refpaint {

struct GuidanceParams {
    double omega = 7.5;
    double gamma = 0.5;
    double eta = 0.0;
    double rho = 0.0;  ///< blend while t / T >= rho

    void validate() const;
};

/// (1 - omega) e_phi + omega gamma e_sem + omega (1 - gamma) e_sty, evaluated
/// as lerp(e_phi, lerp(e_sty, e_sem, gamma), omega) so that the coefficient
/// limits reproduce a branch bit-exactly.
Tensor combine_guidance(const Tensor& e_phi, const Tensor& e_sem, const Tensor& e_sty, double omega, double gamma);

/// Branch outputs (phi, c_ref_sem, c_bg_sty) for one x_t.
using BranchFn = std::function<std::array<Tensor, 3>(const Tensor& x_t, int t)>;

/// Runs the three branches as one batch of single-token contexts.
BranchFn make_branches(const Checkpoint& ckpt, const Embedding& c_ref_sem, const Embedding& c_bg_sty,
                       const Tensor& side, const Mask& m_bg);

Tensor guided_epsilon(const Tensor& x_t, int t, const Embedding& c_ref_sem, const Embedding& c_bg_sty,
                      const Tensor& side, const Mask& m_bg, const GuidanceParams& g, const Checkpoint& ckpt);

/// x_t * (1 - M) + (alpha_t I_bg + sigma_t eps_bg) * M.
Tensor blend_step(const Tensor& x_t, const Tensor& i_bg, const Mask& m_bg, int t, const NoiseSchedule& sched,
                  const Tensor& eps_bg);
Tensor blend_step(const Tensor& x_t, const Tensor& i_bg, const Mask& m_bg, int t, const NoiseSchedule& sched,
                  Rng& rng);

/// Final composite: clamp(x0) where M = 0, I_bg where M = 1.
Tensor composite(const Tensor& x0, const Tensor& i_bg, const Mask& m_bg);

/// Reverse-diffusion loop given any branch function.
Tensor sample_loop(const BranchFn& branches, const Tensor& i_bg, const Mask& m_bg, const NoiseSchedule& sched,
                   const GuidanceParams& g, std::uint64_t seed);

struct Conditioning {
    Embedding ref_semantic;
    Embedding bg_style;
    bool ref_empty = false;
};

/// c_ref_sem from the masked reference tokens, c_bg_sty from the masked background tokens.
Conditioning conditioning(const Checkpoint& ckpt, const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r,
                          const Mask& m_o);

Tensor inpaint(const Checkpoint& ckpt, const Tensor& i_bg, const Mask& m_bg, const Tensor& i_r, const Mask& m_o,
               const GuidanceParams& g, std::uint64_t seed);

}  // namespace refpaint
