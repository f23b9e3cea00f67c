#pragma once

// Checks that DC dispatches are not AC feasible: conservation sums, flat-voltage
// residuals of loss-adjusted DC points, per-bus sign certificates, and the
// randomized generation-gap experiment.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opflab/dispatch.hpp"
#include "opflab/network.hpp"
#include "opflab/power_flow.hpp"

namespace opflab {

enum class Verdict { AcInfeasible, Inconclusive };
enum class CertificateCase { SmallAngle, Case1, Case2 };
enum class LossMode { SlackAbsorbs, FictitiousDemand };

std::string_view to_string(Verdict verdict);
std::string_view to_string(CertificateCase tag);
std::string_view to_string(LossMode mode);
Verdict verdict_from_string(std::string_view text);
CertificateCase certificate_case_from_string(std::string_view text);
LossMode loss_mode_from_string(std::string_view text);

/// Residuals above this are attributed to the model rather than to solver noise.
inline constexpr double kInfeasibilityThreshold = 1e-6;

/// Sign-separated pair at one bus. Case1 (every incident angle difference >= 0):
/// lhs = sum g cos t, rhs = sum b (t - sin t). Case2 (every incident difference < 0):
/// lhs = -sum g sin t, rhs = sum b (1 - cos t). SmallAngle marks mixed-sign buses,
/// summed branch by branch with whichever form matches each branch's sign.
/// g > 0 and b < 0 are the series conductance and susceptance of each branch;
/// margin = lhs - rhs.
struct CertificateEntry {
    std::size_t bus = 0;
    double lhs_value = 0.0;
    double rhs_value = 0.0;
    CertificateCase case_tag = CertificateCase::Case1;
    double margin = 0.0;

    bool operator==(const CertificateEntry&) const = default;
};

struct FeasibilityReport {
    double dc_balance_gap = 0.0;
    std::optional<double> ac_loss_gap;
    /// AC OPF generation minus load, when an AC OPF was solved alongside.
    std::optional<double> ac_opf_loss_gap;
    ResidualVector dc_point_residual;
    /// Bus angles at which the residual and the certificate were evaluated.
    Vector evaluation_theta;
    std::vector<CertificateEntry> certificate;
    Verdict verdict = Verdict::Inconclusive;
    double max_residual = 0.0;
    std::optional<LossMode> loss_mode;
    double estimated_losses = 0.0;
    double adjusted_total_gen = 0.0;
    double ac_total_demand = 0.0;
};

/// Solves ED, then a power flow with every generator held at its ED output.
/// The slack bus must then inject more than ED assigned it; that mismatch is
/// reported as ac_loss_gap and as the residual at the slack bus.
FeasibilityReport check_ed_infeasibility(const NetworkCase& net);

/// |sum_i sum_m B_im theta_m| for the DC susceptance matrix of the case.
double dc_balance_identity(const DispatchSolution& dc, const NetworkCase& net);

/// |sum_i (B theta)_i| for an arbitrary matrix.
double balance_double_sum(const Matrix& susceptance, const Vector& theta);

/// Flat-voltage active residual P_i(|v| = 1, theta) - (B_dc theta)_i.
Vector flat_voltage_residual(const NetworkCase& net, const AdmittanceMatrix& y, const Matrix& b_dc,
                             const Vector& theta);

/// Per-bus sum over incident branches of g cos t + b sin t - b t, with t the
/// angle difference and g, b the branch series admittance; positive exactly
/// when the certificate at that bus separates.
Vector branch_frame_residual(const NetworkCase& net, const Vector& theta);

/// Loss-adjusted DC point and its flat-voltage residual.
/// SlackAbsorbs adds the losses of a power flow at the DC dispatch to the slack
/// generator. FictitiousDemand inflates every active load by the same factor
/// so that the DC re-solve covers those losses, and uses the re-solved angles.
/// Throws SolverError if the loss-estimating power flow does not converge.
FeasibilityReport loss_adjusted_residual(const NetworkCase& net, const DispatchSolution& dc, LossMode mode);

/// Throws std::domain_error if any incident angle difference leaves (-pi/2, pi/2).
std::vector<CertificateEntry> sign_certificate(const NetworkCase& net, const Vector& theta);

/// DC OPF, AC OPF and the loss-adjusted residual for one case.
FeasibilityReport check_feasibility(const NetworkCase& net, LossMode mode = LossMode::SlackAbsorbs);

struct GapExperimentRow {
    int run_id = 0;
    double load_factor_mean = 0.0;
    double total_load = 0.0;
    std::optional<double> dc_total_gen;
    std::optional<double> ac_total_gen;
    std::optional<double> gap;
    bool ac_converged = false;

    bool operator==(const GapExperimentRow&) const = default;
};

/// Per-bus load factors for one run, uniform on [lo, hi] and a pure function of (seed, run_id).
std::vector<double> experiment_load_factors(std::size_t bus_count, double lo, double hi, std::uint64_t seed,
                                            int run_id);

/// Throws std::invalid_argument unless 0 <= lo <= hi and n_runs >= 1.
std::vector<GapExperimentRow> generation_gap_experiment(const NetworkCase& net, int n_runs, double lo, double hi,
                                                        std::uint64_t seed, int jobs = 1);

/// Spearman rank correlation with average ranks for ties. NaN when undefined.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Spearman correlation of total_load against gap over rows with a gap.
double gap_trend(const std::vector<GapExperimentRow>& rows);

}  // namespace opflab
