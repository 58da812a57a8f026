#include "refpaint/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "refpaint/error.hpp"

namespace refpaint {

std::size_t PatchTokens::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

bool Embedding::all_finite() const {
    return std::all_of(vec.begin(), vec.end(), [](double v) { return std::isfinite(v); });
}

ag::Var embed_tokens(ParamScope& scope, const DenoiserConfig& cfg, const ag::Var& images) {
    const auto& s = images.shape();
    require(s.size() == 4 && s[1] == cfg.in_channels && s[2] == cfg.resolution && s[3] == cfg.resolution,
            ErrorKind::shape, "embedder expects [N," + std::to_string(cfg.in_channels) + "," +
                                  std::to_string(cfg.resolution) + "," + std::to_string(cfg.resolution) + "], got " +
                                  shape_str(s));
    ag::Var h = ag::conv2d(images, scope("embed.patch.w"), scope("embed.patch.b"), cfg.patch_size, 0);
    for (int r = 0; r < 2; ++r) {
        const std::string p = "embed.res" + std::to_string(r);
        ag::Var u = ag::conv2d(h, scope(p + ".fc1.w"), scope(p + ".fc1.b"), 1, 0);
        u = ag::conv2d(ag::silu(u), scope(p + ".fc2.w"), scope(p + ".fc2.b"), 1, 0);
        h = ag::add(h, u);
    }
    const auto& hs = h.shape();
    return ag::reshape(h, {hs[0], hs[1], hs[2] * hs[3]});
}

std::vector<std::uint8_t> token_validity(const Mask& m, KeepRegion keep, int patch, double tau) {
    require(patch >= 1 && m.height() % patch == 0 && m.width() % patch == 0, ErrorKind::shape,
            "patch size must divide the mask");
    const int rows = m.height() / patch, cols = m.width() / patch;
    const std::uint8_t excluded = keep == KeepRegion::ones_region ? 0 : 1;
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int hits = 0;
            for (int y = r * patch; y < (r + 1) * patch; ++y)
                for (int x = c * patch; x < (c + 1) * patch; ++x) hits += m.at(y, x) == excluded;
            const double overlap = static_cast<double>(hits) / static_cast<double>(patch * patch);
            valid[static_cast<std::size_t>(r * cols + c)] = overlap > tau ? 0 : 1;
        }
    }
    return valid;
}

Embedding mean_of_valid(const PatchTokens& tokens) {
    const auto d = static_cast<std::size_t>(tokens.tokens.dim(1));
    Embedding e = Embedding::zeros(d);
    std::size_t n = 0;
    for (std::size_t t = 0; t < tokens.count(); ++t) {
        if (!tokens.valid[t]) continue;
        ++n;
        for (std::size_t j = 0; j < d; ++j) e.vec[j] += tokens.tokens[t * d + j];
    }
    if (n > 0) {
        for (auto& v : e.vec) v /= static_cast<double>(n);
    }
    return e;
}

namespace {

PatchTokens tokens_from_graph(const Tensor& ndl, const DenoiserConfig& cfg) {
    const std::int64_t d = ndl.dim(1), l = ndl.dim(2);
    PatchTokens pt;
    pt.rows = pt.cols = cfg.token_grid();
    pt.tokens = Tensor({l, d});
    for (std::int64_t t = 0; t < l; ++t)
        for (std::int64_t j = 0; j < d; ++j) pt.tokens[static_cast<std::size_t>(t * d + j)] = ndl[static_cast<std::size_t>(j * l + t)];
    pt.valid.assign(static_cast<std::size_t>(l), 1);
    return pt;
}

}  // namespace

EncodeResult encode(const Tensor& image, const ParamTable& params, const DenoiserConfig& cfg) {
    require(image.rank() == 3, ErrorKind::shape, "encode expects a [C,H,W] image");
    ag::Graph graph(false);
    ParamScope scope(graph, params);
    const ag::Var x = graph.constant(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
    const ag::Var tok = embed_tokens(scope, cfg, x);
    EncodeResult r;
    r.tokens = tokens_from_graph(tok.value(), cfg);
    r.embedding = mean_of_valid(r.tokens);
    return r;
}

EncodeResult masked_encode(const Tensor& image, const Mask& m, KeepRegion keep, const ParamTable& params,
                           const DenoiserConfig& cfg) {
    require(image.rank() == 3 && image.dim(1) == m.height() && image.dim(2) == m.width(), ErrorKind::shape,
            "mask size does not match image");
    EncodeResult r = encode(image, params, cfg);
    r.tokens.valid = token_validity(m, keep, cfg.patch_size);
    const auto d = static_cast<std::size_t>(r.tokens.tokens.dim(1));
    for (std::size_t t = 0; t < r.tokens.count(); ++t) {
        if (!r.tokens.valid[t]) {
            std::fill_n(r.tokens.tokens.ptr() + t * d, d, 0.0);
        }
    }
    r.embedding = mean_of_valid(r.tokens);
    r.empty = r.tokens.valid_count() == 0;
    return r;
}

ImageEncoder make_encoder(const ParamTable& params, const DenoiserConfig& cfg) {
    return [&params, cfg](const Tensor& image) { return encode(image, params, cfg).embedding; };
}

void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                  std::vector<std::vector<double>>& eigenvectors, double tol) {
    const auto un = static_cast<std::size_t>(n);
    require(a.size() == un * un, ErrorKind::shape, "jacobi_eigen: matrix size");
    auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * un + static_cast<std::size_t>(j)]; };
    std::vector<double> v(un * un, 0.0);
    for (std::size_t i = 0; i < un; ++i) v[i * un + i] = 1.0;

    double scale = 0.0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    const double threshold = tol * std::max(scale, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off = std::max(off, std::abs(A(i, j)));
        if (off <= threshold) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) <= threshold * 1e-3) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < un; ++k) {
                    const double vkp = v[k * un + static_cast<std::size_t>(p)], vkq = v[k * un + static_cast<std::size_t>(q)];
                    v[k * un + static_cast<std::size_t>(p)] = c * vkp - s * vkq;
                    v[k * un + static_cast<std::size_t>(q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(un);
    eigenvectors.assign(un, std::vector<double>(un));
    for (std::size_t i = 0; i < un; ++i) {
        eigenvalues[i] = a[i * un + i];
        for (std::size_t k = 0; k < un; ++k) eigenvectors[i][k] = v[k * un + i];
    }
}

PcaBasis fit_pca(std::span<const Embedding> corpus, int k) {
    require(!corpus.empty(), ErrorKind::parameter, "PCA corpus is empty");
    const std::size_t d = corpus.front().dim();
    require(k >= 1 && static_cast<std::size_t>(k) <= d, ErrorKind::parameter, "PCA rank must lie in [1, D]");
    require(corpus.size() >= static_cast<std::size_t>(k), ErrorKind::parameter, "PCA corpus smaller than rank");
    for (const auto& e : corpus) {
        require(e.dim() == d, ErrorKind::shape, "PCA corpus has mixed dimensions");
    }

    PcaBasis basis;
    basis.mean.assign(d, 0.0);
    for (const auto& e : corpus)
        for (std::size_t j = 0; j < d; ++j) basis.mean[j] += e.vec[j];
    for (auto& m : basis.mean) m /= static_cast<double>(corpus.size());

    std::vector<double> cov(d * d, 0.0);
    std::vector<double> centred(d);
    for (const auto& e : corpus) {
        for (std::size_t j = 0; j < d; ++j) centred[j] = e.vec[j] - basis.mean[j];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) cov[i * d + j] += centred[i] * centred[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= static_cast<double>(corpus.size());
            cov[j * d + i] = cov[i * d + j];
        }
    }

    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    jacobi_eigen(std::move(cov), static_cast<int>(d), values, vectors);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

    for (std::size_t i : order) basis.eigenvalues.push_back(values[i]);
    for (int c = 0; c < k; ++c) {
        std::vector<double> vec = vectors[order[static_cast<std::size_t>(c)]];
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j) {
            if (std::abs(vec[j]) > std::abs(vec[arg])) arg = j;
        }
        if (vec[arg] < 0) {
            for (auto& x : vec) x = -x;
        }
        basis.components.push_back(std::move(vec));
    }
    return basis;
}

int rank_for_variance(std::span<const double> eigenvalues, double fraction) {
    require(!eigenvalues.empty(), ErrorKind::parameter, "no eigenvalues");
    double total = 0.0;
    for (double v : eigenvalues) total += std::max(v, 0.0);
    if (total <= 0.0) return 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
        acc += std::max(eigenvalues[i], 0.0);
        if (acc >= fraction * total) return static_cast<int>(i + 1);
    }
    return static_cast<int>(eigenvalues.size());
}

SemanticStyle decompose(const Embedding& e, const PcaBasis& basis) {
    const std::size_t d = basis.dim();
    require(e.dim() == d, ErrorKind::shape, "embedding and PCA basis dimensions differ");
    SemanticStyle out;
    out.semantic.vec = basis.mean;
    for (const auto& comp : basis.components) {
        double coeff = 0.0;
        for (std::size_t j = 0; j < d; ++j) coeff += comp[j] * (e.vec[j] - basis.mean[j]);
        for (std::size_t j = 0; j < d; ++j) out.semantic.vec[j] += coeff * comp[j];
    }
    out.style.vec.resize(d);
    for (std::size_t j = 0; j < d; ++j) out.style.vec[j] = e.vec[j] - out.semantic.vec[j] + basis.mean[j];
    return out;
}

}  // namespace refpaint
