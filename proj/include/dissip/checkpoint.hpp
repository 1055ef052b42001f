#pragma once

#include <string>

#include "dissip/graph.hpp"

namespace dissip {

// Binary parameter container. Layout: the magic bytes "DCKPT1\n" followed by
// one record per array: name length (u32 LE), name bytes, rank (u32 LE),
// one u32 LE per dimension, then float64 LE values in row-major order.
// Records are written in lexicographic name order.
void save_checkpoint(const ParamStore& store, const std::string& path);

// Loads records into the store. Existing entries are overwritten after a
// shape check; unknown names are created (trainable by default).
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace dissip
