#include "dmrs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dmrs {

namespace {

std::vector<std::int64_t> sample_coordinates(std::int64_t n, std::int64_t limit,
                                             std::mt19937_64& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= limit) return idx;
  for (std::int64_t i = 0; i < limit; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(limit));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double checked(double v, const std::string& where) {
  if (!std::isfinite(v)) {
    throw NumericError("gradient check aborted: objective is non-finite " + where);
  }
  return v;
}

}  // namespace

GradCheckResult gradient_check(const Objective& objective, ParamStore<double>& params,
                               const GradCheckOptions& options) {
  GradList<double> analytic;
  checked(objective(params, &analytic), "at the base point");

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (auto& entry : params.entries()) {
    auto it = std::find_if(analytic.begin(), analytic.end(),
                           [&](const auto& g) { return g.first == entry.name; });
    if (it == analytic.end()) {
      throw IntegrityError("objective returned no gradient for '" + entry.name + "'");
    }
    if (it->second.shape() != entry.tensor.shape()) {
      throw IntegrityError("gradient for '" + entry.name + "' has shape " +
                           shape_str(it->second.shape()) + ", parameter has " +
                           shape_str(entry.tensor.shape()));
    }
    const auto coords = sample_coordinates(entry.tensor.numel(), options.coords_per_tensor, rng);
    for (const std::int64_t i : coords) {
      const auto k = static_cast<std::size_t>(i);
      const double original = entry.tensor[k];
      entry.tensor.mutable_data()[k] = original + options.h;
      const double up = checked(objective(params, nullptr), "at +h for " + entry.name);
      entry.tensor.mutable_data()[k] = original - options.h;
      const double down = checked(objective(params, nullptr), "at -h for " + entry.name);
      entry.tensor.mutable_data()[k] = original;

      const double numeric = (up - down) / (2.0 * options.h);
      const double exact = it->second[k];
      const double err =
          std::abs(exact - numeric) / std::max(1.0, std::abs(exact) + std::abs(numeric));
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = err;
        result.worst_parameter = entry.name;
        result.worst_index = i;
      }
    }
  }
  result.pass = result.max_relative_error <= options.tol;
  return result;
}

}  // namespace dmrs
