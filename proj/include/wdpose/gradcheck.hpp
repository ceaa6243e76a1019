#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace wdpose::gradcheck {

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from dividing finite-difference round-off by ~0.
double relative_error(double analytic, double numeric, double floor);

/// Loss value plus a signature of the piecewise-linear region it was
/// evaluated in (0 for smooth functions).
struct Probe {
  double value = 0.0;
  std::uint64_t region = 0;
};

struct Comparison {
  double max_rel_error = 0.0;
  std::size_t skipped = 0;
};

/// Central differences of `loss` over every entry of `theta` (restored
/// afterwards), compared against `analytic`. An entry whose +h or -h probe
/// lands in a different region than the unperturbed point straddles a
/// ReLU kink, where differences say nothing about the derivative; such
/// entries are skipped and counted. The floor is 1e-4 times the largest
/// magnitude in either gradient, plus 1e-12.
Comparison compare(std::span<double> theta, std::span<const double> analytic, const std::function<Probe()>& loss,
                   double h);

struct CheckResult {
  std::string name;
  std::size_t entries = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct Options {
  double h = 1e-5;
  double tolerance = 1e-5;
  /// A check also fails when more than this fraction of entries is skipped.
  double max_skipped_fraction = 0.1;
};

struct Report {
  std::vector<CheckResult> checks;
  double max_rel_error = 0.0;
  double seconds = 0.0;
  bool passed = false;
};

/// Every layer in isolation, the MLP, each loss, and the end-to-end
/// training objective of a small two-network model.
Report run_suite(std::uint64_t seed, const Options& options = {});

nlohmann::json to_json(const Report& report);

}  // namespace wdpose::gradcheck
