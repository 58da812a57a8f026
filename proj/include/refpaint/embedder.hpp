#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "refpaint/autograd.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/params.hpp"
#include "refpaint/tensor.hpp"

namespace refpaint {

/// One token per P x P patch. Invalidated tokens are zero vectors with valid = 0.
struct PatchTokens {
    Tensor tokens;  ///< [rows*cols, D]
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> valid;

    std::size_t count() const noexcept { return valid.size(); }
    std::size_t valid_count() const;
    int dim() const { return static_cast<int>(tokens.dim(1)); }
};

/// Global embedding: mean of valid tokens, zero when none survive.
struct Embedding {
    std::vector<double> vec;

    std::size_t dim() const noexcept { return vec.size(); }
    bool all_finite() const;
    static Embedding zeros(std::size_t dim) { return Embedding{std::vector<double>(dim, 0.0)}; }
};

struct EncodeResult {
    PatchTokens tokens;
    Embedding embedding;
    bool empty = false;  ///< every token was masked out
};

enum class KeepRegion { ones_region, zeros_region };

/// Differentiable patch embedder on images[N,3,H,W]; returns tokens [N,D,L].
ag::Var embed_tokens(ParamScope& scope, const DenoiserConfig& cfg, const ag::Var& images);

/// Per-token validity: a token is dropped when more than `tau` of its patch
/// lies in the excluded region.
std::vector<std::uint8_t> token_validity(const Mask& m, KeepRegion keep, int patch, double tau = 0.5);

Embedding mean_of_valid(const PatchTokens& tokens);

EncodeResult encode(const Tensor& image, const ParamTable& params, const DenoiserConfig& cfg);

/// Encodes the full unmasked image, then invalidates tokens that overlap the
/// excluded region.
EncodeResult masked_encode(const Tensor& image, const Mask& m, KeepRegion keep, const ParamTable& params,
                           const DenoiserConfig& cfg);

/// Image-to-embedding function; lets tests substitute stub encoders.
using ImageEncoder = std::function<Embedding(const Tensor&)>;
ImageEncoder make_encoder(const ParamTable& params, const DenoiserConfig& cfg);

struct PcaBasis {
    std::vector<double> mean;                     ///< D
    std::vector<std::vector<double>> components;  ///< k orthonormal vectors of size D
    std::vector<double> eigenvalues;              ///< all D eigenvalues, descending

    int k() const noexcept { return static_cast<int>(components.size()); }
    std::size_t dim() const noexcept { return mean.size(); }
};

/// Mean-centred covariance eigendecomposition by cyclic Jacobi rotations.
/// Components are sorted by eigenvalue (ties by index) and signed so that
/// their largest-magnitude entry is positive.
PcaBasis fit_pca(std::span<const Embedding> corpus, int k);

/// Smallest rank whose eigenvalues explain at least `fraction` of the variance.
int rank_for_variance(std::span<const double> eigenvalues, double fraction = 0.9);

struct SemanticStyle {
    Embedding semantic;  ///< mean + projection onto the components
    Embedding style;     ///< e - semantic + mean
};

SemanticStyle decompose(const Embedding& e, const PcaBasis& basis);

/// Symmetric eigendecomposition (Jacobi). Returns eigenvalues and row-major
/// eigenvectors (one per row), unsorted.
void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                  std::vector<std::vector<double>>& eigenvectors, double tol = 1e-10);

}  // namespace refpaint
