#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "fttab/finetune.hpp"
#include "fttab/model.hpp"

namespace fttab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Free-form string metadata stored in the checkpoint header (seed, episodes...).
using CheckpointMetadata = std::map<std::string, std::string>;

void save_backbone(const std::filesystem::path& path, const PfnBackbone& backbone,
                   const CheckpointMetadata& metadata = {});
PfnBackbone load_backbone(const std::filesystem::path& path, CheckpointMetadata* metadata = nullptr);

void save_finetuned(const std::filesystem::path& path, const FtModel& model, Variant variant,
                    const CheckpointMetadata& metadata = {});
FtModel load_finetuned(const std::filesystem::path& path, Variant* variant = nullptr,
                       CheckpointMetadata* metadata = nullptr);

/// "backbone" or "finetuned"; throws ParseError for anything that is not a
/// checkpoint of a supported version.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace fttab
