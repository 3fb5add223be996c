#include "gem_loop.hpp"

#include <chrono>
#include <cmath>
#include <utility>

#include "hemppcat/grouping.hpp"
#include "hemppcat/mstep.hpp"

namespace hemppcat::detail {

namespace {

// Per-step slack on the GEM monotonicity guarantee; covers accumulated
// roundoff near convergence.
double step_tolerance(double ll) { return 1e-8 * (1.0 + std::abs(ll)); }

}  // namespace

GemOutcome run_gem(const Dataset& data, int d, int k, GemState init,
                   const GemOptions& options) {
  if (options.max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(options.rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  const int L = static_cast<int>(data.group.maxCoeff()) + 1;
  const GroupedData grouped(data, L);

  GemState state = std::move(init);
  FitReport report;

  ComponentGaussianCache cache(state.ref(), d);
  auto [R, ll] =
      responsibilities_and_loglik(grouped, state.ref(), cache, data.n());
  report.ll_trace.push_back(ll);

  for (int t = 1; t <= options.max_iters; ++t) {
    GemState next = state;
    try {
      const auto cells = accumulate_cells(grouped, R, state.ref(), cache);
      next.weights = pi_from_cells(cells, L, state.ref().components());
      next.noise_vars =
          state.binding == NoiseBinding::by_group
              ? v_by_group_from_cells(cells, L, state.ref().components(), d)
              : v_by_mixture_from_cells(cells, L, state.ref().components(), d);
      next.means = mu_from_cells(cells, state.ref(), next.noise_vars, state.binding);
      next.factors = F_from_cells(cells, next.means, next.noise_vars, state.binding,
                                  L, d, k);
    } catch (const DegenerateError&) {
      report.stop_reason = StopReason::degenerate;
      break;
    }

    ComponentGaussianCache next_cache(next.ref(), d);
    auto [R_next, ll_next] =
        responsibilities_and_loglik(grouped, next.ref(), next_cache, data.n());

    if (ll_next < ll - step_tolerance(ll_next)) {
      // A real GEM sweep cannot decrease the objective; treat a numerical
      // decrease as degeneracy and keep the previous iterate.
      report.stop_reason = StopReason::degenerate;
      break;
    }

    state = std::move(next);
    cache = std::move(next_cache);
    R = std::move(R_next);
    report.ll_trace.push_back(ll_next);
    report.iterations = t;

    if (std::abs(ll_next - ll) <= options.rel_tol * (1.0 + std::abs(ll_next))) {
      report.converged = true;
      report.stop_reason = StopReason::tolerance;
      break;
    }
    ll = ll_next;
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  GemOutcome out{std::move(state), std::move(report)};
  return out;
}

}  // namespace hemppcat::detail
