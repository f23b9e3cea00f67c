#pragma once

// Dense convex quadratic programming by a primal active-set method.
//
//   minimize    0.5 x'Hx + c'x
//   subject to  A_eq x = b_eq
//               lo_j <= a_j'x <= hi_j        (either side may be infinite)
//
// H must be positive semidefinite. Each iteration works in an orthonormal
// null-space basis Z of the working-set rows; directions of zero reduced
// curvature are followed to the nearest blocking constraint, so linear and
// partially linear objectives are handled without regularisation. A feasible
// start comes from an elastic phase 1 that minimises the total violation.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "opflab/network.hpp"

namespace opflab {

struct LinearConstraint {
    Vector row;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::string label;
};

struct QpProblem {
    Matrix hessian;
    Vector linear;
    Matrix eq;
    Vector eq_rhs;
    std::vector<LinearConstraint> constraints;
};

struct QpOptions {
    double feasibility_tolerance = 1e-9;
    int max_iterations = 2000;
    std::optional<Vector> initial_guess;
};

struct QpResult {
    Vector x;
    Vector eq_multipliers;
    /// Signed multiplier per constraint: > 0 when the lower side binds, < 0 for the upper side.
    Vector constraint_multipliers;
    double objective = 0.0;
    int iterations = 0;
    double stationarity_norm = 0.0;
    double primal_feasibility_norm = 0.0;
    double complementarity_norm = 0.0;
    /// Labels of binding constraints, suffixed ":lower" or ":upper".
    std::vector<std::string> active_set;
};

/// Thrown when no point satisfies the constraints. violated() lists the
/// constraints (by label) that the minimum-violation point still breaks.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& message, std::vector<std::string> violated);
    [[nodiscard]] const std::vector<std::string>& violated() const { return violated_; }

private:
    std::vector<std::string> violated_;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

}  // namespace opflab
