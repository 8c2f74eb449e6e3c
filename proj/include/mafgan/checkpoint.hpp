#pragma once

#include "mafgan/autodiff.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mafgan {

// Checkpoint file: a JSON object
//   {"format": "mafgan-checkpoint/1",
//    "tensors": [{"name": str, "shape": [rows, cols], "values": [row-major doubles]}, ...]}
// Doubles are written in shortest round-trip form, so save/load is exact.
inline constexpr const char* kCheckpointFormat = "mafgan-checkpoint/1";

using StateRefs = std::vector<std::pair<std::string, ad::Matrix*>>;

void save_checkpoint(const std::filesystem::path& path, const StateRefs& state);

// Every named entry in `state` must be present with a matching shape; extra
// entries in the file are an error too.
void load_checkpoint(const std::filesystem::path& path, const StateRefs& state);

std::string checkpoint_to_string(const StateRefs& state);
void checkpoint_from_string(const std::string& text, const StateRefs& state);

}  // namespace mafgan
