#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "refpaint/model_config.hpp"
#include "refpaint/schedule.hpp"
#include "refpaint/trainer.hpp"

namespace refpaint {

struct DataConfig {
    std::string source = "procedural";  ///< "procedural" or "dir"
    std::string dir;
    int count = 512;  ///< procedural corpus size
    std::uint64_t seed = 0;
};

struct OutputConfig {
    std::string dir = "run";
    std::string checkpoint = "model.rfpt";
    std::string metrics = "metrics.txt";
};

struct PcaConfig {
    bool fit = true;   ///< fit and store a basis after training
    int k = 0;         ///< 0 = smallest rank reaching `variance`
    double variance = 0.9;
    int samples = 256;
};

/// Schema of a training run. Every section and key is optional; unknown keys
/// are rejected.
struct RunConfig {
    DenoiserConfig model;
    ScheduleSpec schedule;
    TrainConfig train;
    DataConfig data;
    OutputConfig output;
    PcaConfig pca;

    void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace refpaint
