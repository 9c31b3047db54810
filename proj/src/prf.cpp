#include "tprf/prf.hpp"

#include <cmath>

#include "tprf/errors.hpp"

namespace tprf {

namespace {

void check_inputs(std::span<const float> query,
                  const std::vector<std::span<const float>>& feedback) {
  if (feedback.empty()) throw_validation("feedback list is empty");
  for (const auto& f : feedback)
    if (f.size() != query.size())
      throw_validation("feedback vector dimension does not match query");
}

}  // namespace

void RocchioParams::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta))
    throw_validation("rocchio weights must be finite");
}

std::vector<float> average_prf(std::span<const float> query,
                               const std::vector<std::span<const float>>& feedback) {
  check_inputs(query, feedback);
  const size_t d = query.size();
  const double inv = 1.0 / static_cast<double>(feedback.size() + 1);
  std::vector<float> out(d);
  for (size_t j = 0; j < d; ++j) {
    double s = query[j];
    for (const auto& f : feedback) s += f[j];
    out[j] = static_cast<float>(s * inv);
  }
  return out;
}

std::vector<float> rocchio_prf(std::span<const float> query,
                               const std::vector<std::span<const float>>& feedback,
                               const RocchioParams& params) {
  check_inputs(query, feedback);
  params.validate();
  const size_t d = query.size();
  const double inv_k = 1.0 / static_cast<double>(feedback.size());
  std::vector<float> out(d);
  for (size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (const auto& f : feedback) s += f[j];
    out[j] = static_cast<float>(params.alpha * query[j] + params.beta * s * inv_k);
  }
  return out;
}

}  // namespace tprf
