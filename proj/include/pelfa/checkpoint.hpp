#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pelfa/nn/layers.hpp"
#include "pelfa/tensor.hpp"

namespace pelfa {

// Single-file archive holding parameter blobs keyed by canonical dotted
// names, a JSON config block, optimizer state tensors, the epoch counter and
// RNG state. Save -> load -> save reproduces identical bytes.
struct CheckpointData {
    static constexpr std::uint32_t kFormatVersion = 1;

    std::uint32_t format_version = kFormatVersion;
    std::string config_json;  // stored verbatim
    std::int64_t epoch = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> opt_state;

    const Tensor* find_param(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& ck);
CheckpointData load_checkpoint(const std::string& path);

// Copies every visited parameter (by value) into the checkpoint, in
// visitation order.
CheckpointData snapshot_params(const std::function<void(const nn::ParamVisitor&)>& visit);

// Writes checkpoint tensors back into the visited parameters. Every visited
// name must exist with a matching shape, or a ConfigError names the offender.
void restore_params(const std::function<void(const nn::ParamVisitor&)>& visit,
                    const CheckpointData& ck);

// Best-effort variant for loading externally trained encoder weights:
// assigns matching names, returns the number of tensors loaded.
int restore_params_loose(const std::function<void(const nn::ParamVisitor&)>& visit,
                         const CheckpointData& ck);

}  // namespace pelfa
