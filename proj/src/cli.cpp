#include "refpaint/cli.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "refpaint/checkpoint.hpp"
#include "refpaint/config.hpp"
#include "refpaint/dataset.hpp"
#include "refpaint/error.hpp"
#include "refpaint/evaluator.hpp"
#include "refpaint/image_io.hpp"
#include "refpaint/mask.hpp"
#include "refpaint/rng.hpp"
#include "refpaint/sampler.hpp"
#include "refpaint/training_run.hpp"

namespace refpaint {

std::string format_error(const std::string& kind, const std::string& message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\') escaped.push_back('\\');
        escaped.push_back(c == '\n' ? ' ' : c);
    }
    return "error kind=" + kind + " message=\"" + escaped + "\"";
}

namespace {

struct TrainArgs {
    std::string config;
};

struct InpaintArgs {
    std::string checkpoint, bg, mask, ref, refmask, out;
    GuidanceParams guidance;
};

struct MaskgenArgs {
    int n = 1;
    int size = 32;
    double p_full_hole = 0.0;
    std::string out_dir = "masks";
};

struct EvalArgs {
    std::string checkpoint, manifest, out;
};

struct PcaArgs {
    std::string checkpoint, out, data_dir;
    int procedural = 512;
    int k = 0;
    double variance = 0.9;
    int samples = 256;
};

void cmd_train(const TrainArgs& a, std::optional<std::uint64_t> seed, std::ostream& out) {
    RunConfig cfg = load_run_config(a.config);
    if (seed) {
        cfg.train.seed = *seed;
        cfg.data.seed = *seed;
    }
    const Dataset data = load_dataset(cfg);
    const TrainResult r = run_training(data, cfg);
    out << "trained steps=" << cfg.train.steps << " checkpoint=" << r.checkpoint.string()
        << " metrics=" << r.metrics.string() << '\n';
}

void cmd_inpaint(const InpaintArgs& a, std::uint64_t seed, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Tensor bg = read_image(a.bg);
    const Tensor ref = read_image(a.ref);
    const Mask m_bg = read_mask(a.mask);
    const Mask m_o = read_mask(a.refmask);
    const Tensor result = inpaint(ckpt, bg, m_bg, ref, m_o, a.guidance, seed);
    write_image(a.out, result);
    out << "wrote " << a.out << '\n';
}

void cmd_maskgen(const MaskgenArgs& a, std::uint64_t seed, std::ostream& out) {
    require(a.n >= 1, ErrorKind::parameter, "--n must be >= 1");
    require(a.p_full_hole >= 0.0 && a.p_full_hole <= 1.0, ErrorKind::parameter, "--full-hole must lie in [0, 1]");
    const StrokeParams params = StrokeParams::defaults_for(a.size, a.size);
    std::error_code ec;
    std::filesystem::create_directories(a.out_dir, ec);
    require(!ec, ErrorKind::io, "cannot create " + a.out_dir + ": " + ec.message());
    for (int i = 0; i < a.n; ++i) {
        Rng rng = Rng::derive(seed, {0x3A5C, static_cast<std::uint64_t>(i)});
        const Mask m = maybe_full_hole(rng, generate_freeform(rng, a.size, a.size, params), a.p_full_hole);
        std::ostringstream name;
        name << "mask_" << std::setw(4) << std::setfill('0') << i << ".pgm";
        write_mask(std::filesystem::path(a.out_dir) / name.str(), m);
    }
    out << "wrote " << a.n << " masks to " << a.out_dir << '\n';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    return cells;
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const ImageEncoder encoder = make_encoder(ckpt.params, ckpt.model);
    std::ifstream in(a.manifest);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open manifest " + a.manifest);
    const std::filesystem::path base = std::filesystem::path(a.manifest).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::io, "manifest is empty");
    const std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* need : {"output", "original", "bg", "mask", "ref", "refmask"}) {
        require(col.count(need) != 0, ErrorKind::configuration, std::string("manifest lacks column '") + need + "'");
    }

    EvalReport report;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        require(cells.size() == header.size(), ErrorKind::configuration,
                "manifest line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells");
        auto cell = [&](const char* name) { return resolve(cells[col.at(name)]); };
        const Tensor output = read_image(cell("output"));
        const Tensor original = read_image(cell("original"));
        const Tensor bg = read_image(cell("bg"));
        const Tensor ref = read_image(cell("ref"));
        const Mask m_bg = read_mask(cell("mask"));
        const Mask m_o = read_mask(cell("refmask"));
        const Tensor cp = copy_paste(bg, m_bg, ref, m_o);
        EvalRow row = eval_pair(output, original, cp, m_bg, encoder);
        row.name = cells[col.at("output")];
        report.rows.push_back(std::move(row));
    }
    require(!report.rows.empty(), ErrorKind::configuration, "manifest has no rows");
    if (a.out.empty()) {
        report.write_csv(out);
    } else {
        std::ofstream f(a.out);
        require(static_cast<bool>(f), ErrorKind::io, "cannot open " + a.out);
        report.write_csv(f);
        out << "wrote " << a.out << '\n';
    }
}

void cmd_pca(const PcaArgs& a, std::uint64_t seed, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Dataset data = a.data_dir.empty() ? procedural_corpus(seed, a.procedural, ckpt.model.resolution)
                                            : load_dir(a.data_dir, ckpt.model.resolution);
    ckpt.pca = fit_semantic_basis(corpus_embeddings(data, ckpt.params, ckpt.model, a.samples), a.k, a.variance);
    const std::string dest = a.out.empty() ? a.checkpoint : a.out;
    save_checkpoint(ckpt, dest);
    out << "pca k=" << ckpt.pca->k() << " dim=" << ckpt.pca->dim() << " wrote " << dest << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"refpaint: reference-based painterly inpainting", "refpaint"};
    app.require_subcommand(1);
    app.fallthrough();
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Seed for every random draw");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model from a JSON config");
    c_train->add_option("--config", train.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);

    InpaintArgs inp;
    auto* c_inp = app.add_subcommand("inpaint", "Fill the hole of a background image from a reference object");
    c_inp->add_option("--checkpoint", inp.checkpoint)->required();
    c_inp->add_option("--bg", inp.bg, "Background image")->required();
    c_inp->add_option("--mask", inp.mask, "Background mask (white = keep)")->required();
    c_inp->add_option("--ref", inp.ref, "Reference image")->required();
    c_inp->add_option("--refmask", inp.refmask, "Reference object mask (white = object)")->required();
    c_inp->add_option("--omega", inp.guidance.omega, "Guidance scale")->capture_default_str();
    c_inp->add_option("--gamma", inp.guidance.gamma, "Semantic/style balance")->capture_default_str();
    c_inp->add_option("--eta", inp.guidance.eta, "Sampler stochasticity")->capture_default_str();
    c_inp->add_option("--rho", inp.guidance.rho, "Blend while t/T >= rho")->capture_default_str();
    c_inp->add_option("--out", inp.out, "Output image (.png or .ppm)")->required();

    MaskgenArgs mg;
    auto* c_mg = app.add_subcommand("maskgen", "Write free-form stroke masks as PGM files");
    c_mg->add_option("--n", mg.n, "Number of masks")->capture_default_str();
    c_mg->add_option("--size", mg.size, "Mask side length")->capture_default_str();
    c_mg->add_option("--full-hole", mg.p_full_hole, "Probability of an all-hole mask")->capture_default_str();
    c_mg->add_option("--out-dir", mg.out_dir)->capture_default_str();

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Embedding distances over a CSV manifest");
    c_ev->add_option("--checkpoint", ev.checkpoint)->required();
    c_ev->add_option("--manifest", ev.manifest, "CSV with columns output,original,bg,mask,ref,refmask")->required();
    c_ev->add_option("--out", ev.out, "CSV report path (stdout when omitted)");

    PcaArgs pca;
    auto* c_pca = app.add_subcommand("pca", "Fit the semantic basis and store it in a checkpoint");
    c_pca->add_option("--checkpoint", pca.checkpoint)->required();
    c_pca->add_option("--out", pca.out, "Destination (defaults to --checkpoint)");
    c_pca->add_option("--data-dir", pca.data_dir, "Image directory (procedural corpus when omitted)");
    c_pca->add_option("--procedural", pca.procedural, "Procedural corpus size")->capture_default_str();
    c_pca->add_option("--k", pca.k, "Rank (0 = by explained variance)")->capture_default_str();
    c_pca->add_option("--variance", pca.variance)->capture_default_str();
    c_pca->add_option("--samples", pca.samples)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << format_error("usage", e.what()) << '\n';
        return 2;
    }

    const std::uint64_t s = seed.value_or(0);
    try {
        if (*c_train) cmd_train(train, seed, out);
        if (*c_inp) cmd_inpaint(inp, s, out);
        if (*c_mg) cmd_maskgen(mg, s, out);
        if (*c_ev) cmd_eval(ev, out);
        if (*c_pca) cmd_pca(pca, s, out);
    } catch (const Error& e) {
        err << format_error(std::string(to_string(e.kind())), e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << format_error("internal", e.what()) << '\n';
        return 1;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"refpaint"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace refpaint
