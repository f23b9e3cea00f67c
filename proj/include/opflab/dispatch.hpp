#pragma once

// Economic dispatch and DC optimal power flow.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opflab/network.hpp"
#include "opflab/qp.hpp"

namespace opflab {

enum class DispatchKind { ED, DC, AC };

std::string_view to_string(DispatchKind kind);
DispatchKind dispatch_kind_from_string(std::string_view text);

/// Result record shared by ED, DC OPF and AC OPF. theta and branch_flows are
/// empty for ED; qg is zero and v_mag is one for ED and DC.
struct DispatchSolution {
    DispatchKind kind = DispatchKind::DC;
    Vector pg;
    Vector qg;
    Vector v_mag;
    Vector theta;
    Vector branch_flows;
    double objective = 0.0;
    double total_gen = 0.0;
    double total_load = 0.0;
};

struct QpDiagnostics {
    double kkt_stationarity_norm = 0.0;
    double primal_feasibility_norm = 0.0;
    double complementarity_norm = 0.0;
    int iterations = 0;
    std::vector<std::string> active_set;
};

struct EdResult {
    DispatchSolution solution;
    QpDiagnostics diagnostics;
    /// System incremental cost shared by every generator strictly inside its box.
    double lambda = 0.0;
};

struct DcOpfResult {
    DispatchSolution solution;
    QpDiagnostics diagnostics;
};

/// Minimises total cost subject to one system-wide balance equation and the
/// generator boxes. Generators with zero quadratic cost that tie at the
/// clearing incremental cost are loaded in index order.
/// Throws InfeasibleError when total load lies outside aggregate capacity.
EdResult solve_economic_dispatch(const NetworkCase& net);

/// DC OPF: cost minimisation subject to nodal B-theta balance at every bus,
/// generator boxes and per-branch flow limits; the slack angle is fixed at 0.
/// Throws InfeasibleError listing the constraints that cannot be met.
DcOpfResult solve_dcopf(const NetworkCase& net);

/// Per-branch DC flow (theta_from - theta_to) / x, positive from -> to.
Vector dc_flow(const Vector& theta, const NetworkCase& net);

}  // namespace opflab
