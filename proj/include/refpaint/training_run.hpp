#pragma once

#include <filesystem>
#include <vector>

#include "refpaint/checkpoint.hpp"
#include "refpaint/config.hpp"
#include "refpaint/dataset.hpp"

namespace refpaint {

struct TrainResult {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics;
    Checkpoint state;            ///< what was written to `checkpoint`
    std::vector<double> losses;  ///< one per train_step
};

/// Dataset named by the config's data section.
Dataset load_dataset(const RunConfig& cfg);

/// Runs cfg.train.steps train_steps from init_params(model, seed), writes the
/// metrics file (`step=<int> loss=<float>`, the mean loss over the preceding
/// log window) and checkpoints. A failed checkpoint write leaves any previous
/// checkpoint file intact.
TrainResult run_training(const Dataset& data, const RunConfig& cfg);

/// Global embeddings of the first `samples` images (all when <= 0).
std::vector<Embedding> corpus_embeddings(const Dataset& data, const ParamTable& params, const DenoiserConfig& model,
                                         int samples = 0);

/// Fits the semantic basis; k = 0 picks the smallest rank reaching `variance`.
PcaBasis fit_semantic_basis(std::span<const Embedding> embeddings, int k, double variance);

}  // namespace refpaint
