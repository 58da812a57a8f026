#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "refpaint/embedder.hpp"
#include "refpaint/model_config.hpp"
#include "refpaint/params.hpp"
#include "refpaint/schedule.hpp"

namespace refpaint {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "RFPT", u32 version, u64 header length, JSON header, u64 record count,
/// then per tensor: u64 name length, name, u64 rank, u64 dims[rank], f32
/// data. All integers and floats little-endian; records sorted by name.
struct Checkpoint {
    DenoiserConfig model;
    ScheduleSpec schedule;
    ParamTable params;
    std::optional<PcaBasis> pca;
    std::int64_t step = 0;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

/// Writes to a sibling temporary file and renames it into place, so a failed
/// write never clobbers an existing checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every tensor through f32, matching what a save/load cycle yields.
ParamTable round_to_f32(const ParamTable& params);

}  // namespace refpaint
