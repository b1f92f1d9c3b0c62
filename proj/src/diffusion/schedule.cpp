#include "ace/diffusion/schedule.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ace::diffusion {

NoiseSchedule schedule_from_betas(std::vector<double> betas, std::string kind) {
  require(!betas.empty(), "schedule must have at least one step");
  NoiseSchedule s;
  s.kind = std::move(kind);
  s.alpha_bars.reserve(betas.size());
  double product = 1.0;
  for (double b : betas) {
    require(b > 0.0 && b < 1.0, "betas must lie in (0, 1)");
    product *= 1.0 - b;
    s.alpha_bars.push_back(product);
  }
  s.betas = std::move(betas);
  return s;
}

NoiseSchedule build_schedule(int num_steps, std::string_view kind) {
  if (kind != "linear" && kind != "cosine") throw ConfigError("unsupported schedule kind '" + std::string(kind) + "'");
  require(num_steps >= 1, "schedule needs T >= 1, got " + std::to_string(num_steps));
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  if (kind == "linear") {
    const double scale = 1000.0 / num_steps;
    const double start = scale * 1e-4;
    const double end = std::min(scale * 0.02, 0.999);
    for (int i = 0; i < num_steps; ++i)
      betas[i] = num_steps == 1 ? start : start + (end - start) * i / (num_steps - 1);
  } else {
    const auto f = [](double u) {
      const double v = std::cos((u + 0.008) / 1.008 * std::numbers::pi / 2.0);
      return v * v;
    };
    for (int i = 0; i < num_steps; ++i) {
      const double t1 = static_cast<double>(i) / num_steps;
      const double t2 = static_cast<double>(i + 1) / num_steps;
      betas[i] = std::min(1.0 - f(t2) / f(t1), 0.999);
    }
  }
  return schedule_from_betas(std::move(betas), std::string(kind));
}

double RespacedSchedule::posterior_sigma(int i) const {
  const double ab = alpha_bar(i);
  const double ab_prev = alpha_bar(i - 1);
  const double variance = beta(i) * (1.0 - ab_prev) / (1.0 - ab);
  return std::sqrt(std::max(variance, 0.0));
}

RespacedSchedule respace(const NoiseSchedule& schedule, int steps) {
  const int total = schedule.num_steps();
  require(steps >= 1 && steps <= total,
          "respacing needs 1 <= T' <= T, got T'=" + std::to_string(steps) + ", T=" + std::to_string(total));
  RespacedSchedule r;
  r.base = schedule;
  r.kept_steps.reserve(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    const int t = static_cast<int>((static_cast<long long>(i) * total) / steps);
    r.kept_steps.push_back(t);
    r.alpha_bars.push_back(schedule.alpha_bar(t));
  }
  return r;
}

}  // namespace ace::diffusion
