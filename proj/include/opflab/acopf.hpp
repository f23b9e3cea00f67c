#pragma once

// AC optimal power flow in polar coordinates, solved by a primal-dual
// interior-point method with log barriers on every variable bound.
// Line-flow limits are not modelled.

#include <functional>
#include <string>
#include <vector>

#include "opflab/dispatch.hpp"
#include "opflab/network.hpp"

namespace opflab {

struct AcOpfOptions {
    double tol_kkt = 1e-6;
    double tol_feas = 1e-8;
    int max_iterations = 100;
    double barrier_initial = 0.1;
    double barrier_shrink = 0.2;

    /// Throws std::invalid_argument unless every field is positive and barrier_shrink < 1.
    void validate() const;
};

/// The nonlinear program behind solve_acopf. Variables are stacked as
/// (theta of every non-slack bus, |v| of every bus, pg, qg); equality rows
/// are the P balance of every bus, the Q balance of every bus, then one row
/// per variable whose lower and upper bounds coincide.
class AcOpfProblem {
public:
    explicit AcOpfProblem(const NetworkCase& net);

    [[nodiscard]] const NetworkCase& network() const { return net_; }
    [[nodiscard]] const AdmittanceMatrix& admittance() const { return y_; }
    [[nodiscard]] Eigen::Index variable_count() const { return nx_; }
    [[nodiscard]] Eigen::Index equality_count() const { return 2 * n_ + static_cast<Eigen::Index>(fixed_.size()); }

    [[nodiscard]] const Vector& lower_bounds() const { return lower_; }
    [[nodiscard]] const Vector& upper_bounds() const { return upper_; }
    /// Variables whose bounds differ and are both or singly finite.
    [[nodiscard]] const std::vector<Eigen::Index>& lower_bounded() const { return lower_bounded_; }
    [[nodiscard]] const std::vector<Eigen::Index>& upper_bounded() const { return upper_bounded_; }

    /// Flat voltages, zero angles, generator outputs at box midpoints.
    [[nodiscard]] Vector initial_point() const;

    [[nodiscard]] double objective(const Vector& x) const;
    [[nodiscard]] Vector objective_gradient(const Vector& x) const;
    [[nodiscard]] Vector constraints(const Vector& x) const;
    [[nodiscard]] Matrix constraint_jacobian(const Vector& x) const;

    /// objective_weight * f(x) + eq_multipliers' g(x).
    [[nodiscard]] double lagrangian(const Vector& x, const Vector& eq_multipliers, double objective_weight = 1.0) const;
    [[nodiscard]] Vector lagrangian_gradient(const Vector& x, const Vector& eq_multipliers,
                                             double objective_weight = 1.0) const;
    [[nodiscard]] Matrix lagrangian_hessian(const Vector& x, const Vector& eq_multipliers,
                                            double objective_weight = 1.0) const;

    [[nodiscard]] Vector theta(const Vector& x) const;
    [[nodiscard]] Vector v_mag(const Vector& x) const;
    [[nodiscard]] Vector pg(const Vector& x) const;
    [[nodiscard]] Vector qg(const Vector& x) const;

private:
    NetworkCase net_;
    AdmittanceMatrix y_;
    Eigen::Index n_ = 0;
    Eigen::Index ng_ = 0;
    Eigen::Index n_theta_ = 0;
    Eigen::Index nx_ = 0;
    Eigen::Index slack_ = 0;
    std::vector<Eigen::Index> theta_col_;  // per bus, -1 at the slack
    Vector lower_;
    Vector upper_;
    std::vector<Eigen::Index> fixed_;
    std::vector<Eigen::Index> lower_bounded_;
    std::vector<Eigen::Index> upper_bounded_;

    [[nodiscard]] Eigen::Index v_col(Eigen::Index i) const { return n_theta_ + i; }
    [[nodiscard]] Eigen::Index pg_col(Eigen::Index k) const { return n_theta_ + n_ + k; }
    [[nodiscard]] Eigen::Index qg_col(Eigen::Index k) const { return n_theta_ + n_ + ng_ + k; }
};

struct AcOpfTraceRow {
    int iteration = 0;
    double barrier = 0.0;
    double kkt_norm = 0.0;
    double feas_norm = 0.0;
    double objective = 0.0;
};

/// Primal-dual state handed to an observer after every iteration. Multipliers
/// refer to the internally scaled objective objective_scale^-1 * f.
struct AcOpfIterate {
    int iteration = 0;
    Vector x;
    Vector eq_multipliers;
    Vector lower_multipliers;  ///< aligned with AcOpfProblem::lower_bounded()
    Vector upper_multipliers;  ///< aligned with AcOpfProblem::upper_bounded()
    double objective_scale = 1.0;
    double barrier = 0.0;
};

struct AcOpfResult {
    DispatchSolution solution;
    double kkt_norm = 0.0;
    double feasibility_norm = 0.0;
    bool converged = false;
    int iterations = 0;
    std::string status;
    std::vector<AcOpfTraceRow> trace;
};

using AcOpfObserver = std::function<void(const AcOpfIterate&)>;

/// Locally optimal dispatch for min sum a pg^2 + b pg + c subject to the AC
/// balance equations and bounds on |v|, pg and qg. The slack angle is 0.
AcOpfResult solve_acopf(const NetworkCase& net, const AcOpfOptions& options = {},
                        const AcOpfObserver& observer = {});

struct VerificationCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct AcOpfVerification {
    std::vector<VerificationCheck> checks;
    double max_residual = 0.0;
    double losses = 0.0;
    bool passed = false;
};

/// Re-checks an AC OPF result with the independent residual evaluator:
/// balance residuals, bound slacks, and loss consistency against branch losses.
AcOpfVerification verify_acopf(const AcOpfResult& result, const NetworkCase& net, double tolerance = 1e-8);

/// Active power entering each branch at its from-end.
Vector ac_branch_flows(const NetworkCase& net, const Vector& v_mag, const Vector& theta);

}  // namespace opflab
