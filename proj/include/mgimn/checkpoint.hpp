#pragma once

#include <string>

#include "mgimn/params.hpp"

namespace mgimn {

/// Checkpoint container: a decimal ASCII line holding the byte length of the
/// JSON header, the newline-terminated UTF-8 JSON header mapping tensor name
/// to shape and payload byte offset, then the concatenated little-endian
/// 32-bit float payloads in header order.
void save_checkpoint(const ParamSet& params, const std::string& path);

/// Loads values into an already constructed ParamSet; every tensor must be
/// present with a matching shape ('io' error naming the offending tensor
/// otherwise). Values are widened from 32-bit storage.
void load_checkpoint(ParamSet& params, const std::string& path);

}  // namespace mgimn
