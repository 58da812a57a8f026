#include "refpaint/training_run.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>

#include "refpaint/error.hpp"
#include "refpaint/parallel.hpp"

namespace refpaint {

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.data.source == "dir") return load_dir(cfg.data.dir, cfg.model.resolution);
    return procedural_corpus(cfg.data.seed, cfg.data.count, cfg.model.resolution);
}

std::vector<Embedding> corpus_embeddings(const Dataset& data, const ParamTable& params, const DenoiserConfig& model,
                                         int samples) {
    const std::size_t n = samples > 0 ? std::min(data.size(), static_cast<std::size_t>(samples)) : data.size();
    std::vector<Embedding> out(n);
    parallel_for(n, [&](std::size_t i) { out[i] = encode(data.images[i], params, model).embedding; });
    return out;
}

PcaBasis fit_semantic_basis(std::span<const Embedding> embeddings, int k, double variance) {
    require(!embeddings.empty(), ErrorKind::parameter, "no embeddings to fit");
    const int rank = k > 0 ? k : rank_for_variance(fit_pca(embeddings, 1).eigenvalues, variance);
    return fit_pca(embeddings, rank);
}

namespace {

void write_or_keep(const Checkpoint& ckpt, const std::filesystem::path& path) {
    try {
        save_checkpoint(ckpt, path);
    } catch (const Error& e) {
        raise(ErrorKind::checkpoint, std::string(e.what()) + " (step " + std::to_string(ckpt.step) +
                                         "; previous checkpoint file left untouched)");
    }
}

}  // namespace

TrainResult run_training(const Dataset& data, const RunConfig& cfg) {
    cfg.validate();
    require(!data.empty(), ErrorKind::parameter, "training dataset is empty");
    require(data.resolution == cfg.model.resolution, ErrorKind::shape, "dataset resolution differs from the model's");

    const std::filesystem::path dir = cfg.output.dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorKind::io, "cannot create output directory " + dir.string() + ": " + ec.message());

    TrainResult result;
    result.checkpoint = dir / cfg.output.checkpoint;
    result.metrics = dir / cfg.output.metrics;
    std::ofstream metrics(result.metrics, std::ios::trunc);
    require(static_cast<bool>(metrics), ErrorKind::io, "cannot open metrics file " + result.metrics.string());

    const NoiseSchedule sched = cfg.schedule.build();
    Trainer trainer(cfg.model, sched, cfg.train, init_params(cfg.model, cfg.train.seed));
    trainer.set_dump_dir(dir);

    auto snapshot = [&](bool final_state) {
        Checkpoint ckpt{cfg.model, cfg.schedule, round_to_f32(trainer.params()), std::nullopt, trainer.steps_done()};
        if (final_state && cfg.pca.fit) {
            ckpt.pca = fit_semantic_basis(corpus_embeddings(data, ckpt.params, cfg.model, cfg.pca.samples), cfg.pca.k,
                                          cfg.pca.variance);
        }
        write_or_keep(ckpt, result.checkpoint);
        return ckpt;
    };

    for (int s = 0; s < cfg.train.steps; ++s) {
        result.losses.push_back(trainer.step(data.images));
        const int done = s + 1;
        if (done % cfg.train.log_every == 0) {
            const double mean =
                std::accumulate(result.losses.end() - cfg.train.log_every, result.losses.end(), 0.0) / cfg.train.log_every;
            metrics << "step=" << done << " loss=" << std::setprecision(9) << mean << '\n';
            metrics.flush();
        }
        if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 && done < cfg.train.steps) {
            snapshot(false);
        }
    }
    require(static_cast<bool>(metrics), ErrorKind::io, "failed writing metrics file " + result.metrics.string());
    result.state = snapshot(true);
    return result;
}

}  // namespace refpaint
