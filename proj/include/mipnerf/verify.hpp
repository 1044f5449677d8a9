#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mipnerf {

/// How a check's statistic is compared against its tolerance.
enum class Comparison {
    AtMost,   // pass iff statistic <= tolerance (errors, z-scores)
    AtLeast,  // pass iff statistic >= tolerance (p-values, ratios)
};

struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    Comparison comparison = Comparison::AtMost;
    bool pass = false;
    nlohmann::ordered_json details = nlohmann::ordered_json::object();
};

CheckResult make_check(std::string name, double statistic, double tolerance,
                       Comparison comparison = Comparison::AtMost);

struct VerifyOptions {
    std::uint64_t seed = 0;
    /// Multiplies every Monte Carlo sample count (floored at 1000). Tolerances are
    /// stated in standard errors, so they stay valid at any scale.
    double sample_scale = 1.0;
    /// Flip the sign of the correction term of the closed-form t variance (mutation test).
    bool mutate_var_t = false;

    std::size_t samples(std::size_t nominal) const;
};

// Frustum geometry.
CheckResult check_frustum_moments_mc(const VerifyOptions& options, int frustums = 100);
CheckResult check_frustum_gaussian_lift_mc(const VerifyOptions& options, int frustums = 20);
CheckResult check_moments_exact_rational();
CheckResult check_moments_thin_interval_finite();
CheckResult check_moments_stable_vs_naive(const VerifyOptions& options);
CheckResult check_cov_diag_matches_full(const VerifyOptions& options);
CheckResult check_cylinder_moments_mc(const VerifyOptions& options, int cylinders = 20);
CheckResult check_frustum_sampler_gof(const VerifyOptions& options, bool rejection);
CheckResult check_frustum_sampler_homogeneity(const VerifyOptions& options);

// Encoding.
CheckResult check_expected_trig_mc(const VerifyOptions& options);
CheckResult check_ipe_mc(const VerifyOptions& options, int regions = 50, int degree = 4);
CheckResult check_ipe_zero_cov_is_pe(const VerifyOptions& options);
/// PE over exact frustum samples against IPE of the Gaussian fit. Reported per
/// frustum; asserted (10 SE) only for thin cones, where the fit is close.
CheckResult check_frustum_ipe_approximation(const VerifyOptions& options, int frustums = 12);

// Rendering.
CheckResult check_composite_two_interval();
CheckResult check_composite_two_interval_integral();
CheckResult check_composite_fine_grid(const VerifyOptions& options, int profiles = 20, int intervals = 1024,
                                      int steps = 10000);
CheckResult check_stratified_chi2(const VerifyOptions& options);
CheckResult check_inverse_transform_ks(const VerifyOptions& options);
CheckResult check_inverse_transform_split(const VerifyOptions& options);

// Gradients.
struct GradientCheckOptions {
    int parameters = 256;  // spread evenly over every dense slice of every MLP
    int pixels = 8;
    int n_coarse = 8;
    int n_fine = 8;
    bool two_mlps = false;
    double h = 1e-4;
    double tolerance = 1e-4;
};

/// Analytic gradient of the full training loss (render + composite + area-weighted
/// MSE) in 64-bit against central differences. Fine-pass samples are frozen.
CheckResult check_gradient_fd(const VerifyOptions& options, const GradientCheckOptions& gradient = {});

struct RegisteredCheck {
    std::string name;
    std::function<CheckResult(const VerifyOptions&)> run;
};

/// Every check run by the verify command, in report order.
const std::vector<RegisteredCheck>& registered_checks();

std::vector<CheckResult> run_checks(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result = nullptr);

/// {"seed", "sample_scale", "mutate_var_t", "pass", "checks": [{name, statistic,
/// tolerance, comparison, pass, details}]}
nlohmann::ordered_json verify_report(const VerifyOptions& options, const std::vector<CheckResult>& results);

std::string to_string(Comparison c);

}  // namespace mipnerf
