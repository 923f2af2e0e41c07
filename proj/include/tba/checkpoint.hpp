#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tba/tensor.hpp"

namespace tba {

// JSON header (metadata + tensor layout + blob hash) next to a flat
// little-endian float64 blob; round-trips bit-exactly.
struct CheckpointMeta {
    std::map<std::string, std::string> fields;

    const std::string& at(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& base, const CheckpointMeta& meta,
                     const std::vector<std::string>& names, const std::vector<Tensor>& tensors);

CheckpointMeta peek_checkpoint_meta(const std::filesystem::path& base);

// Verifies the blob hash and the declared layout, then fills the given
// tensors (shapes must already match).
CheckpointMeta load_checkpoint(const std::filesystem::path& base,
                               const std::vector<std::string>& expected_names,
                               std::vector<Tensor>& tensors);

}  // namespace tba
