#include "opflab/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace opflab {

std::string_view to_string(DispatchKind kind) {
    switch (kind) {
        case DispatchKind::ED: return "ED";
        case DispatchKind::DC: return "DC";
        case DispatchKind::AC: return "AC";
    }
    return "DC";
}

DispatchKind dispatch_kind_from_string(std::string_view text) {
    if (text == "ED") return DispatchKind::ED;
    if (text == "DC") return DispatchKind::DC;
    if (text == "AC") return DispatchKind::AC;
    throw std::invalid_argument("unknown dispatch kind '" + std::string(text) + "'");
}

namespace {

std::string gen_label(std::size_t k) { return "gen " + std::to_string(k + 1) + " p"; }

std::string flow_label(const NetworkCase& net, std::size_t k) {
    const auto& br = net.branches[k];
    return "branch " + std::to_string(k + 1) + " (" + std::to_string(net.buses[br.from].id) + "-" +
           std::to_string(net.buses[br.to].id) + ") flow";
}

double generation_cost(const NetworkCase& net, const Vector& pg) {
    double total = 0.0;
    for (std::size_t k = 0; k < net.generator_count(); ++k) total += net.generators[k].cost(pg[static_cast<Eigen::Index>(k)]);
    return total;
}

// Generation of unit k at incremental cost lambda. Units with zero quadratic
// cost sit at a bound away from their linear cost; `at_tie_high` selects the
// bound used when lambda equals it.
double unit_output(const Generator& gen, double lambda, bool at_tie_high) {
    if (gen.cost_a > 0.0) return std::clamp((lambda - gen.cost_b) / (2.0 * gen.cost_a), gen.p_min, gen.p_max);
    if (lambda > gen.cost_b) return gen.p_max;
    if (lambda < gen.cost_b) return gen.p_min;
    return at_tie_high ? gen.p_max : gen.p_min;
}

double total_output(const NetworkCase& net, double lambda, bool at_tie_high) {
    double total = 0.0;
    for (const auto& gen : net.generators) total += unit_output(gen, lambda, at_tie_high);
    return total;
}

}  // namespace

EdResult solve_economic_dispatch(const NetworkCase& net) {
    const double demand = net.total_p_load();
    const auto ng = net.generator_count();
    double cap_lo = 0.0, cap_hi = 0.0;
    for (const auto& gen : net.generators) {
        cap_lo += gen.p_min;
        cap_hi += gen.p_max;
    }
    constexpr double tol = 1e-9;
    if (ng == 0 || demand < cap_lo - tol || demand > cap_hi + tol)
        throw InfeasibleError("total load lies outside aggregate generation capacity", {"system balance"});

    std::vector<double> breaks;
    for (const auto& gen : net.generators) {
        if (gen.cost_a > 0.0) {
            breaks.push_back(gen.marginal_cost(gen.p_min));
            breaks.push_back(gen.marginal_cost(gen.p_max));
        } else {
            breaks.push_back(gen.cost_b);
        }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    // total_output is nondecreasing in lambda and piecewise linear between
    // breakpoints; it can jump only at the linear cost of a zero-a unit.
    double lambda = breaks.front();
    int scanned = 0;
    for (std::size_t i = 0; i < breaks.size(); ++i) {
        ++scanned;
        const double hi = total_output(net, breaks[i], true);
        if (demand <= hi + tol * 1e-3 || i + 1 == breaks.size()) {
            lambda = breaks[i];
            break;
        }
        const double next_lo = total_output(net, breaks[i + 1], false);
        if (demand < next_lo) {
            double slope = 0.0;
            const double mid = 0.5 * (breaks[i] + breaks[i + 1]);
            for (const auto& gen : net.generators) {
                if (gen.cost_a <= 0.0) continue;
                const double p = (mid - gen.cost_b) / (2.0 * gen.cost_a);
                if (p > gen.p_min && p < gen.p_max) slope += 1.0 / (2.0 * gen.cost_a);
            }
            lambda = breaks[i] + (demand - hi) / slope;
            break;
        }
    }

    Vector pg(static_cast<Eigen::Index>(ng));
    double assigned = 0.0;
    std::vector<std::size_t> tied;
    for (std::size_t k = 0; k < ng; ++k) {
        const auto& gen = net.generators[k];
        if (gen.cost_a <= 0.0 && gen.cost_b == lambda) {
            tied.push_back(k);
            pg[static_cast<Eigen::Index>(k)] = gen.p_min;
        } else {
            pg[static_cast<Eigen::Index>(k)] = unit_output(gen, lambda, false);
        }
        assigned += pg[static_cast<Eigen::Index>(k)];
    }
    // Tied linear-cost units take the remainder, lowest index first.
    double remainder = demand - assigned;
    for (auto k : tied) {
        const auto& gen = net.generators[k];
        const double extra = std::clamp(remainder, 0.0, gen.p_max - gen.p_min);
        pg[static_cast<Eigen::Index>(k)] += extra;
        remainder -= extra;
    }

    EdResult result;
    result.lambda = lambda;
    auto& sol = result.solution;
    sol.kind = DispatchKind::ED;
    sol.pg = pg;
    sol.qg = Vector::Zero(static_cast<Eigen::Index>(ng));
    sol.v_mag = Vector::Ones(static_cast<Eigen::Index>(net.bus_count()));
    sol.objective = generation_cost(net, pg);
    sol.total_gen = pg.sum();
    sol.total_load = demand;

    auto& diag = result.diagnostics;
    diag.iterations = scanned;
    diag.primal_feasibility_norm = std::abs(sol.total_gen - demand);
    for (std::size_t k = 0; k < ng; ++k) {
        const auto& gen = net.generators[k];
        const double p = pg[static_cast<Eigen::Index>(k)];
        const double mc_gap = gen.marginal_cost(p) - lambda;
        const bool at_lo = p <= gen.p_min;
        const bool at_hi = p >= gen.p_max;
        double violation = 0.0;
        if (at_lo && at_hi) {
            violation = 0.0;
        } else if (at_lo) {
            violation = std::max(0.0, -mc_gap);
        } else if (at_hi) {
            violation = std::max(0.0, mc_gap);
        } else {
            violation = std::abs(mc_gap);
        }
        diag.kkt_stationarity_norm = std::max(diag.kkt_stationarity_norm, violation);
        diag.primal_feasibility_norm = std::max({diag.primal_feasibility_norm, gen.p_min - p, p - gen.p_max});
        if (at_lo) diag.active_set.push_back(gen_label(k) + ":lower");
        if (at_hi && !at_lo) diag.active_set.push_back(gen_label(k) + ":upper");
    }
    std::sort(diag.active_set.begin(), diag.active_set.end());
    return result;
}

Vector dc_flow(const Vector& theta, const NetworkCase& net) {
    if (theta.size() != static_cast<Eigen::Index>(net.bus_count()))
        throw std::invalid_argument("dc_flow: theta must have one entry per bus");
    Vector flows(static_cast<Eigen::Index>(net.branch_count()));
    for (std::size_t k = 0; k < net.branch_count(); ++k) {
        const auto& br = net.branches[k];
        flows[static_cast<Eigen::Index>(k)] =
            (theta[static_cast<Eigen::Index>(br.from)] - theta[static_cast<Eigen::Index>(br.to)]) / br.x;
    }
    return flows;
}

DcOpfResult solve_dcopf(const NetworkCase& net) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const auto ng = static_cast<Eigen::Index>(net.generator_count());
    const auto slack = static_cast<Eigen::Index>(net.slack_bus());
    const Matrix bdc = build_dc_susceptance(net);

    // Variables: pg (ng) followed by the angles of every non-slack bus.
    std::vector<Eigen::Index> angle_col(static_cast<std::size_t>(n), -1);
    Eigen::Index nv = ng;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i != slack) angle_col[static_cast<std::size_t>(i)] = nv++;
    }

    QpProblem qp;
    qp.hessian = Matrix::Zero(nv, nv);
    qp.linear = Vector::Zero(nv);
    for (Eigen::Index k = 0; k < ng; ++k) {
        const auto& gen = net.generators[static_cast<std::size_t>(k)];
        qp.hessian(k, k) = 2.0 * gen.cost_a;
        qp.linear[k] = gen.cost_b;
    }

    // Nodal balance, including the slack row: B theta - C pg = -p_load.
    qp.eq = Matrix::Zero(n, nv);
    qp.eq_rhs = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index m = 0; m < n; ++m) {
            const auto col = angle_col[static_cast<std::size_t>(m)];
            if (col >= 0) qp.eq(i, col) = bdc(i, m);
        }
        qp.eq_rhs[i] = -net.buses[static_cast<std::size_t>(i)].p_load;
    }
    for (Eigen::Index k = 0; k < ng; ++k) qp.eq(static_cast<Eigen::Index>(net.generators[static_cast<std::size_t>(k)].bus), k) = -1.0;

    for (Eigen::Index k = 0; k < ng; ++k) {
        const auto& gen = net.generators[static_cast<std::size_t>(k)];
        LinearConstraint box{Vector::Zero(nv), gen.p_min, gen.p_max, gen_label(static_cast<std::size_t>(k))};
        box.row[k] = 1.0;
        qp.constraints.push_back(std::move(box));
    }
    for (std::size_t k = 0; k < net.branch_count(); ++k) {
        const auto& br = net.branches[k];
        if (!br.flow_limit) continue;
        LinearConstraint flow{Vector::Zero(nv), -*br.flow_limit, *br.flow_limit, flow_label(net, k)};
        const auto cf = angle_col[br.from];
        const auto ct = angle_col[br.to];
        if (cf >= 0) flow.row[cf] += 1.0 / br.x;
        if (ct >= 0) flow.row[ct] -= 1.0 / br.x;
        qp.constraints.push_back(std::move(flow));
    }

    // Warm start from the network-free dispatch and the angles it implies.
    QpOptions options;
    {
        const auto ed = solve_economic_dispatch(net);
        Vector x0 = Vector::Zero(nv);
        x0.head(ng) = ed.solution.pg;
        if (n > 1) {
            Vector injection = Vector::Zero(n);
            for (Eigen::Index k = 0; k < ng; ++k)
                injection[static_cast<Eigen::Index>(net.generators[static_cast<std::size_t>(k)].bus)] += ed.solution.pg[k];
            for (Eigen::Index i = 0; i < n; ++i) injection[i] -= net.buses[static_cast<std::size_t>(i)].p_load;
            Matrix reduced(n - 1, n - 1);
            Vector rhs(n - 1);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ri = angle_col[static_cast<std::size_t>(i)];
                if (ri < 0) continue;
                rhs[ri - ng] = injection[i];
                for (Eigen::Index m = 0; m < n; ++m) {
                    const auto cm = angle_col[static_cast<std::size_t>(m)];
                    if (cm >= 0) reduced(ri - ng, cm - ng) = bdc(i, m);
                }
            }
            x0.tail(n - 1) = reduced.ldlt().solve(rhs);
        }
        options.initial_guess = x0;
    }

    const auto qp_result = solve_qp(qp, options);

    DcOpfResult result;
    auto& sol = result.solution;
    sol.kind = DispatchKind::DC;
    sol.pg = qp_result.x.head(ng);
    sol.qg = Vector::Zero(ng);
    sol.v_mag = Vector::Ones(n);
    sol.theta = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto col = angle_col[static_cast<std::size_t>(i)];
        if (col >= 0) sol.theta[i] = qp_result.x[col];
    }
    sol.branch_flows = dc_flow(sol.theta, net);
    sol.objective = generation_cost(net, sol.pg);
    sol.total_gen = sol.pg.sum();
    sol.total_load = net.total_p_load();

    auto& diag = result.diagnostics;
    diag.kkt_stationarity_norm = qp_result.stationarity_norm;
    diag.primal_feasibility_norm = qp_result.primal_feasibility_norm;
    diag.complementarity_norm = qp_result.complementarity_norm;
    diag.iterations = qp_result.iterations;
    diag.active_set = qp_result.active_set;
    return result;
}

}  // namespace opflab
