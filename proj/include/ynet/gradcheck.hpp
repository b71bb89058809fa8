#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ynet {

struct GradOffender {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradGroupReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;         // elements too close to a kink
  std::vector<GradOffender> worst;  // descending by rel_error
};

struct GradReport {
  std::string op;
  double tol = 0.0;
  std::vector<GradGroupReport> groups;

  double max_rel_error() const;
  bool pass() const { return max_rel_error() <= tol; }
};

// One parameter group: values are perturbed in place, `analytic` holds the
// gradient of the scalar loss with respect to them.
struct GradGroup {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
  std::function<bool(double)> near_kink;  // optional, called with the unperturbed value
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Elements whose value is within kink_margin * step of a breakpoint are skipped.
  double kink_margin = 10.0;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double rel_floor = 1e-3;
  std::size_t keep_worst = 3;
};

// Central-difference check of every element of every group.
GradReport check_gradients(std::string op, std::vector<GradGroup> groups, const std::function<double()>& loss,
                           const GradCheckOptions& opt = {});

// Random double-precision instances of every layer primitive, each checked
// against central differences.
std::vector<GradReport> run_gradcheck_suite(const GradCheckOptions& opt = {}, std::uint64_t seed = 7);

std::string format_report(const GradReport& r);

}  // namespace ynet
