#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "refpaint/checkpoint.hpp"
#include "refpaint/cli.hpp"
#include "refpaint/dataset.hpp"
#include "refpaint/embedder.hpp"
#include "refpaint/error.hpp"
#include "refpaint/evaluator.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/rng.hpp"
#include "refpaint/sampler.hpp"
#include "refpaint/schedule.hpp"

namespace py = pybind11;
using namespace refpaint;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray to_numpy(const Tensor& t) {
    DoubleArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
    return out;
}

Mask to_mask(const ByteArray& a) {
    if (a.ndim() != 2) throw py::value_error("mask must be a 2-D array");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 0);
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) m.set(y, x, a.at(y, x) ? 1 : 0);
    return m;
}

ByteArray to_numpy(const Mask& m) {
    ByteArray out({m.height(), m.width()});
    std::copy(m.cells().begin(), m.cells().end(), out.mutable_data());
    return out;
}

Embedding to_embedding(const DoubleArray& a) {
    if (a.ndim() != 1) throw py::value_error("embedding must be 1-D");
    return Embedding{std::vector<double>(a.data(), a.data() + a.size())};
}

DoubleArray to_numpy(const Embedding& e) {
    DoubleArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(e.dim())});
    std::copy(e.vec.begin(), e.vec.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_refpaint, m) {
    m.doc() = "Reference-based painterly inpainting";

    static py::exception<Error> error(m, "RefpaintError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
            PyErr_SetString(error.ptr(), msg.c_str());
        }
    });

    py::class_<NoiseSchedule>(m, "Schedule")
        .def(py::init([](int steps) { return default_schedule(steps); }), py::arg("steps") = 200)
        .def_readonly("steps", &NoiseSchedule::steps)
        .def_readonly("beta", &NoiseSchedule::beta)
        .def_readonly("alpha", &NoiseSchedule::alpha)
        .def_readonly("sigma", &NoiseSchedule::sigma);

    m.def(
        "forward_sample",
        [](const DoubleArray& x0, int t, const DoubleArray& eps, const NoiseSchedule& s) {
            return to_numpy(forward_sample(to_tensor(x0), t, to_tensor(eps), s));
        },
        py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

    m.def(
        "generate_mask",
        [](std::uint64_t seed, int height, int width, double p_full_hole) {
            Rng rng(seed);
            const Mask mask = generate_freeform(rng, height, width, StrokeParams::defaults_for(height, width));
            return to_numpy(maybe_full_hole(rng, mask, p_full_hole));
        },
        py::arg("seed"), py::arg("height") = 32, py::arg("width") = 32, py::arg("p_full_hole") = 0.0,
        "Free-form stroke mask, 1 = keep, 0 = hole.");

    m.def(
        "procedural_corpus",
        [](std::uint64_t seed, int n, int resolution) {
            const Dataset ds = procedural_corpus(seed, n, resolution);
            std::vector<std::string> families;
            for (auto f : ds.families) families.emplace_back(to_string(f));
            return py::make_tuple(to_numpy(stack(ds.images)), families);
        },
        py::arg("seed"), py::arg("n"), py::arg("resolution") = 32, "Returns (images[n,3,R,R], families).");

    m.def(
        "combine_guidance",
        [](const DoubleArray& e_phi, const DoubleArray& e_sem, const DoubleArray& e_sty, double omega, double gamma) {
            return to_numpy(combine_guidance(to_tensor(e_phi), to_tensor(e_sem), to_tensor(e_sty), omega, gamma));
        },
        py::arg("e_phi"), py::arg("e_sem"), py::arg("e_sty"), py::arg("omega"), py::arg("gamma"));

    m.def(
        "fit_pca",
        [](const DoubleArray& x, int k) {
            if (x.ndim() != 2) throw py::value_error("fit_pca expects an [n, D] array");
            std::vector<Embedding> corpus;
            for (py::ssize_t i = 0; i < x.shape(0); ++i)
                corpus.push_back(Embedding{std::vector<double>(x.data(i, 0), x.data(i, 0) + x.shape(1))});
            const PcaBasis b = fit_pca(corpus, k);
            DoubleArray comps({static_cast<py::ssize_t>(b.k()), static_cast<py::ssize_t>(b.dim())});
            for (int i = 0; i < b.k(); ++i)
                std::copy(b.components[static_cast<std::size_t>(i)].begin(), b.components[static_cast<std::size_t>(i)].end(),
                          comps.mutable_data(i, 0));
            return py::make_tuple(to_numpy(Embedding{b.mean}), comps, to_numpy(Embedding{b.eigenvalues}));
        },
        py::arg("x"), py::arg("k"), "Returns (mean, components[k, D], eigenvalues).");

    m.def(
        "decompose",
        [](const DoubleArray& e, const DoubleArray& mean, const DoubleArray& components) {
            PcaBasis b;
            b.mean = to_embedding(mean).vec;
            if (components.ndim() != 2) throw py::value_error("components must be [k, D]");
            for (py::ssize_t i = 0; i < components.shape(0); ++i)
                b.components.emplace_back(components.data(i, 0), components.data(i, 0) + components.shape(1));
            const SemanticStyle s = decompose(to_embedding(e), b);
            return py::make_tuple(to_numpy(s.semantic), to_numpy(s.style));
        },
        py::arg("e"), py::arg("mean"), py::arg("components"), "Returns (semantic, style).");

    m.def(
        "cosine_distance",
        [](const DoubleArray& a, const DoubleArray& b) { return cosine_distance(to_embedding(a), to_embedding(b)); },
        py::arg("a"), py::arg("b"));

    m.def(
        "copy_paste",
        [](const DoubleArray& bg, const ByteArray& m_bg, const DoubleArray& ref, const ByteArray& m_o) {
            return to_numpy(copy_paste(to_tensor(bg), to_mask(m_bg), to_tensor(ref), to_mask(m_o)));
        },
        py::arg("bg"), py::arg("mask"), py::arg("ref"), py::arg("refmask"));

    m.def(
        "inpaint",
        [](const std::string& checkpoint, const DoubleArray& bg, const ByteArray& m_bg, const DoubleArray& ref,
           const ByteArray& m_o, double omega, double gamma, double eta, double rho, std::uint64_t seed) {
            const Checkpoint ck = load_checkpoint(checkpoint);
            GuidanceParams g{omega, gamma, eta, rho};
            const Tensor b = to_tensor(bg), r = to_tensor(ref);
            const Mask mb = to_mask(m_bg), mo = to_mask(m_o);
            Tensor out;
            {
                py::gil_scoped_release release;
                out = inpaint(ck, b, mb, r, mo, g, seed);
            }
            return to_numpy(out);
        },
        py::arg("checkpoint"), py::arg("bg"), py::arg("mask"), py::arg("ref"), py::arg("refmask"),
        py::arg("omega") = 7.5, py::arg("gamma") = 0.5, py::arg("eta") = 0.0, py::arg("rho") = 0.0,
        py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the refpaint tool in-process; returns (exit code, stdout, stderr).");
}
