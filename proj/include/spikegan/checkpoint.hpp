#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikegan/tensor.hpp"

namespace spikegan {

// On-disk container: 8-byte magic "SGADCKPT", u16 format version, u32 header
// length, a UTF-8 JSON header mapping tensor names to shapes/offsets plus a
// free-form "meta" object, then the raw little-endian f32 payload.
struct Checkpoint {
    std::map<std::string, Tensor<float>> tensors;
    nlohmann::json meta = nlohmann::json::object();
};

inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Parameter values -> container entries (names taken from the parameters).
void store_params(Checkpoint& ckpt, const std::vector<Parameter<float>*>& params);

// Container entries -> parameter values; every parameter must be present
// with a matching shape, else a named error.
void load_params(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params);

}  // namespace spikegan
