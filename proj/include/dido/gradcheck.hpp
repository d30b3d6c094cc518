#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dido/nn.hpp"

namespace dido {

/// Scalar function returning its value and, when want_grad is set, its
/// analytic gradient (otherwise the gradient may be left empty). The value is
/// long double so differences of nearly equal losses keep their digits.
using GradFn = std::function<std::pair<long double, std::vector<double>>(
    const std::vector<double>&, bool want_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Central differences against the analytic gradient; relative error per
/// coordinate is |ga - gn| / max(|ga|, |gn|, 1e-8). If indices is non-empty
/// only those coordinates are perturbed. eps must lie in [1e-7, 1e-4].
/// Throws NonFiniteGradient when any value or gradient is not finite.
GradCheckResult grad_check(const GradFn& f, const std::vector<double>& x, double eps,
                           const std::vector<std::size_t>& indices = {});

/// Flattens parameters in map order, and the inverse.
std::vector<double> flatten_params(const ParamMap& p);
void unflatten_params(const std::vector<double>& flat, ParamMap& p);

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
};

/// The fixed battery run by the gradcheck command: every loss through the
/// network that feeds it, plus a raw GRU output and a quadratic sanity case.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed);

}  // namespace dido
