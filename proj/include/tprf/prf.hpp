#pragma once

#include <span>
#include <vector>

namespace tprf {

// Weights for the Rocchio-style query rewrite: alpha scales the query,
// beta scales the mean of the feedback vectors. Positive feedback only.
struct RocchioParams {
  double alpha = 0.5;
  double beta = 0.5;

  void validate() const;
};

// (query + sum(feedback)) / (k + 1), computed in 64-bit, stored back
// as float32.
std::vector<float> average_prf(std::span<const float> query,
                               const std::vector<std::span<const float>>& feedback);

// alpha * query + beta * mean(feedback).
std::vector<float> rocchio_prf(std::span<const float> query,
                               const std::vector<std::span<const float>>& feedback,
                               const RocchioParams& params);

}  // namespace tprf
