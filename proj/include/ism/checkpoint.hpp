#pragma once

/// Checkpoint file layout: one JSON header line (format tag, encoder spec,
/// tensor shapes, free-form extra section) terminated by '\n', followed by
/// the raw little-endian float64 data of every tensor in header order.
/// Round trips are bit exact.

#include <string>
#include <vector>

#include "json.hpp"

#include "ism/encoder.hpp"

namespace ism {

struct Checkpoint {
  EncoderSpec spec;
  std::vector<Tensor> tensors;
  nlohmann::json extra;
};

void save_checkpoint(const std::string& path, const EncoderSpec& spec,
                     const std::vector<Tensor>& tensors,
                     const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ism
