#pragma once

#include <string>

#include "egean/model.hpp"

namespace egean {

inline constexpr const char* kCheckpointHeader = "EGEAN-CKPT-1";

// Single-file checkpoint: versioned header line, a JSON block echoing the
// model config, the dataset schema and the parameter table (names + shapes),
// followed by the raw row-major little-endian 64-bit parameter values in the
// listed order.
void save_checkpoint(const std::string& path, const EgeanModel& model);

// Rebuilds the model from the config echo and restores every parameter
// bit-exactly, including the embedding-freeze state.
EgeanModel load_checkpoint(const std::string& path);

}  // namespace egean
