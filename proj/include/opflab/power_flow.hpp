#pragma once

// AC power flow (Newton-Raphson, polar coordinates) and AC balance residual
// evaluators. Sign convention throughout: nodal injection = generation - load,
// so a point is AC feasible when every residual is zero.

#include <optional>
#include <string_view>

#include "opflab/network.hpp"

namespace opflab {

/// Per-bus active and reactive balance residuals, per-unit:
///   p_residual_i = P_i(v, theta) - (sum_{k at i} pg_k - p_load_i), Q analogous.
struct ResidualVector {
    Vector p_residual;
    Vector q_residual;

    [[nodiscard]] double max_abs() const;
    [[nodiscard]] double max_abs_p() const;
};

ResidualVector ac_residual(const NetworkCase& net, const AdmittanceMatrix& y, const Vector& v_mag,
                           const Vector& theta, const Vector& pg, const Vector& qg);

/// Generator active outputs and bus voltage setpoints for a power flow run.
/// v_set is per bus and read at the slack bus and at PV buses.
struct PfDispatch {
    Vector pg;
    Vector v_set;
};

/// Operating point stored in the case file (gen Pg and Vg columns).
PfDispatch nominal_dispatch(const NetworkCase& net);

struct PfOptions {
    double tolerance = 1e-8;
    int max_iterations = 20;
    bool enforce_q_limits = true;
    int max_q_limit_rounds = 10;
    std::optional<Vector> v_start;
    std::optional<Vector> theta_start;
};

enum class PfStatus { Converged, MaxIterations, SingularJacobian };

std::string_view to_string(PfStatus status);

struct PfSolution {
    Vector v_mag;
    Vector theta;
    Vector pg;  ///< per generator; slack-bus generation includes the absorbed mismatch
    Vector qg;
    double slack_p = 0.0;  ///< total active generation at the slack bus
    double slack_q = 0.0;
    double losses_p = 0.0;
    bool converged = false;
    PfStatus status = PfStatus::MaxIterations;
    int iterations = 0;  ///< Newton iterations over all Q-limit rounds
    double final_residual_norm = 0.0;
    std::vector<std::size_t> q_limited_buses;
};

PfSolution solve_newton_pf(const NetworkCase& net, const PfDispatch& dispatch, const PfOptions& options = {});

/// Sum of all generation minus all load. Throws std::logic_error if pf did not converge.
double total_losses(const PfSolution& pf, const NetworkCase& net);

/// Active power dissipated in each branch (from-end plus to-end flow).
Vector branch_losses(const NetworkCase& net, const Vector& v_mag, const Vector& theta);

/// Active power consumed by bus shunt conductances.
double shunt_losses(const NetworkCase& net, const Vector& v_mag);

/// Splits a bus-level reactive output over the generators at that bus in
/// proportion to their reactive ranges, clipping to the aggregate range.
Vector split_reactive(const NetworkCase& net, const Vector& bus_q_gen);

/// AC residual at |v| = 1 and theta = theta_dc. When qg is not supplied,
/// generators at each bus cover the local reactive residual as far as their
/// bounds allow.
ResidualVector evaluate_dc_point(const NetworkCase& net, const AdmittanceMatrix& y, const Vector& theta_dc,
                                 const Vector& pg_dc, const std::optional<Vector>& qg = std::nullopt);

}  // namespace opflab
