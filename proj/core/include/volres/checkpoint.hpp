#pragma once

#include <string>
#include <utility>
#include <vector>

#include "volres/network.hpp"

namespace volres {

// Extra named tensors carried alongside the network parameters; optimizer
// state travels here under reserved "opt/" names.
struct CheckpointExtras {
  std::vector<std::pair<std::string, Tensor>> tensors;
};

// Container layout (little-endian): magic "VRCK", u32 version, u64 spec
// fingerprint, u32 tensor count, then per tensor: u32 name length, name
// bytes, u8 dtype, u8 rank, u32 extents, raw payload.
void save_checkpoint(Network& net, const std::string& path,
                     const CheckpointExtras& extras = {});

// Rebuilds the network from the embedded spec record.
Network load_checkpoint(const std::string& path, CheckpointExtras* extras = nullptr);

// Loads parameters into an existing network; the file fingerprint must match
// the network's spec.
void load_checkpoint_into(Network& net, const std::string& path,
                          CheckpointExtras* extras = nullptr);

std::uint64_t checkpoint_fingerprint(const std::string& path);

}  // namespace volres
