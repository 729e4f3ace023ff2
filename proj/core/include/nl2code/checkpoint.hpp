#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nl2code/optim.hpp"
#include "nl2code/tensor.hpp"

namespace nl2code {

// A checkpoint is a pair of files sharing a path stem:
//   <stem>.manifest  text: format line, step, optimizer scalars, config
//                    key/value lines, then one line per tensor slot with its
//                    shape and byte offset into the blob.
//   <stem>.blob      little-endian float64 payload: parameter values in
//                    manifest order, then first-moment then second-moment
//                    Adam slots (zeros for parameters the optimizer has not
//                    touched yet).
// Saving the result of load_checkpoint again produces byte-identical files.

struct LoadedCheckpoint {
  long long step = 0;
  AdamState adam;
  std::vector<std::pair<std::string, std::string>> config_fields;
  std::map<std::string, std::vector<int>> shapes;
  std::map<std::string, std::vector<double>> tensors;
};

void save_checkpoint(const std::string& path_stem,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const AdamState& adam,
                     const std::vector<std::pair<std::string, std::string>>& config_fields,
                     long long step);

LoadedCheckpoint load_checkpoint(const std::string& path_stem);

// Copies loaded parameter values into live tensors by name.  Throws
// ValidationError if a parameter is missing from the checkpoint or its shape
// disagrees.
void apply_checkpoint(const LoadedCheckpoint& ckpt,
                      std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace nl2code
