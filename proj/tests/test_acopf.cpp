#include <doctest.h>

#include <cmath>
#include <random>

#include "cases.hpp"
#include "opflab/acopf.hpp"
#include "opflab/power_flow.hpp"
#include "oracles.hpp"

using namespace opflab;

namespace {

const char* const kFixtures[] = {"case2.m", "case3.m", "case9.m", "case14.m"};

Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2 * h);
    }
    return g;
}

double max_rel_error(const Vector& computed, const Vector& reference) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < computed.size(); ++i)
        worst = std::max(worst, std::abs(computed[i] - reference[i]) / std::max(1.0, std::abs(reference[i])));
    return worst;
}

}  // namespace

TEST_CASE("AC OPF converges and passes independent verification on every fixture") {
    for (const char* name : kFixtures) {
        CAPTURE(name);
        const NetworkCase net = load_case_file(oracle::data_path(name));
        const AcOpfResult r = solve_acopf(net);
        REQUIRE(r.converged);
        CHECK(r.status == "converged");
        CHECK(r.solution.kind == DispatchKind::AC);
        CHECK(r.feasibility_norm <= 1e-8);
        CHECK(r.kkt_norm <= 1e-6);
        CHECK(r.iterations == static_cast<int>(r.trace.size()) - 1);
        const AcOpfVerification v = verify_acopf(r, net);
        for (const auto& check : v.checks) {
            CAPTURE(check.name);
            CHECK(check.passed);
        }
        CHECK(v.passed);
        CHECK(v.losses > 0.0);
        CHECK(r.solution.total_gen - r.solution.total_load == doctest::Approx(v.losses).epsilon(1e-6));
        for (std::size_t i = 0; i < net.bus_count(); ++i) {
            const double vm = r.solution.v_mag[static_cast<Eigen::Index>(i)];
            CHECK(vm >= net.buses[i].v_min - 1e-8);
            CHECK(vm <= net.buses[i].v_max + 1e-8);
        }
        for (std::size_t k = 0; k < net.generator_count(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            CHECK(r.solution.pg[kk] >= net.generators[k].p_min - 1e-8);
            CHECK(r.solution.pg[kk] <= net.generators[k].p_max + 1e-8);
            CHECK(r.solution.qg[kk] >= net.generators[k].q_min - 1e-8);
            CHECK(r.solution.qg[kk] <= net.generators[k].q_max + 1e-8);
        }
        CHECK(r.solution.branch_flows.size() == static_cast<Eigen::Index>(net.branch_count()));
    }
}

TEST_CASE("AC OPF costs at least as much as DC OPF when losses are positive") {
    for (const char* name : {"case3.m", "case9.m", "case14.m"}) {
        CAPTURE(name);
        const NetworkCase net = load_case_file(oracle::data_path(name));
        const AcOpfResult ac = solve_acopf(net);
        const DcOpfResult dc = solve_dcopf(net);
        REQUIRE(ac.converged);
        CHECK(ac.solution.total_gen > dc.solution.total_gen);
        CHECK(ac.solution.objective > dc.solution.objective);
    }
}

TEST_CASE("AC OPF trace is monotone in the barrier parameter") {
    const NetworkCase net = load_case_file(oracle::data_path("case9.m"));
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.trace.size() >= 2);
    CHECK(r.trace.front().iteration == 0);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        CHECK(r.trace[i].iteration == r.trace[i - 1].iteration + 1);
        CHECK(r.trace[i].barrier <= r.trace[i - 1].barrier);
    }
    CHECK(r.trace.back().feas_norm == doctest::Approx(r.feasibility_norm));
}

TEST_CASE("AC OPF: power flow at the optimal dispatch reproduces the optimum") {
    for (const char* name : kFixtures) {
        CAPTURE(name);
        const NetworkCase net = load_case_file(oracle::data_path(name));
        const AcOpfResult r = solve_acopf(net);
        REQUIRE(r.converged);
        PfDispatch d{r.solution.pg, r.solution.v_mag};
        const PfSolution pf = solve_newton_pf(net, d, {.enforce_q_limits = false});
        REQUIRE(pf.converged);
        CHECK(pf.iterations <= 10);
        CHECK((pf.v_mag - r.solution.v_mag).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((pf.theta - r.solution.theta).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("AC OPF problem: analytic derivatives agree with finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (const char* name : kFixtures) {
        CAPTURE(name);
        const NetworkCase net = load_case_file(oracle::data_path(name));
        const AcOpfProblem p(net);
        Vector x = p.initial_point();
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += 0.05 * unit(rng);
        Vector lambda(p.equality_count());
        for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = unit(rng);

        const Vector g = p.objective_gradient(x);
        CHECK(max_rel_error(g, central_gradient([&](const Vector& z) { return p.objective(z); }, x, 1e-6)) <= 1e-5);

        const Matrix jac = p.constraint_jacobian(x);
        REQUIRE(jac.rows() == p.equality_count());
        REQUIRE(jac.cols() == p.variable_count());
        for (Eigen::Index row = 0; row < jac.rows(); ++row) {
            const Vector fd = central_gradient([&](const Vector& z) { return p.constraints(z)[row]; }, x, 1e-6);
            CHECK(max_rel_error(jac.row(row).transpose(), fd) <= 1e-5);
        }

        const double w = 0.37;
        const Vector lg = p.lagrangian_gradient(x, lambda, w);
        CHECK(max_rel_error(lg, central_gradient([&](const Vector& z) { return p.lagrangian(z, lambda, w); }, x, 1e-6)) <=
              1e-5);

        const Matrix hess = p.lagrangian_hessian(x, lambda, w);
        CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        for (Eigen::Index c = 0; c < x.size(); ++c) {
            Vector xp = x, xm = x;
            xp[c] += 1e-6;
            xm[c] -= 1e-6;
            const Vector col = (p.lagrangian_gradient(xp, lambda, w) - p.lagrangian_gradient(xm, lambda, w)) / 2e-6;
            CHECK(max_rel_error(hess.col(c), col) <= 1e-5);
        }
    }
}

TEST_CASE("AC OPF: Lagrangian gradient at solver iterates matches finite differences") {
    const NetworkCase net = load_case_file(oracle::data_path("case14.m"));
    const AcOpfProblem p(net);
    std::vector<AcOpfIterate> seen;
    const AcOpfResult r = solve_acopf(net, {}, [&](const AcOpfIterate& it) {
        if (seen.size() < 5) seen.push_back(it);
    });
    REQUIRE(r.converged);
    REQUIRE(seen.size() == 5);
    for (const auto& it : seen) {
        CAPTURE(it.iteration);
        const double w = 1.0 / it.objective_scale;
        // Full Lagrangian including the bound terms.
        auto full = [&](const Vector& z) {
            double value = p.lagrangian(z, it.eq_multipliers, w);
            for (std::size_t j = 0; j < p.lower_bounded().size(); ++j) {
                const Eigen::Index col = p.lower_bounded()[j];
                value += it.lower_multipliers[static_cast<Eigen::Index>(j)] * (p.lower_bounds()[col] - z[col]);
            }
            for (std::size_t j = 0; j < p.upper_bounded().size(); ++j) {
                const Eigen::Index col = p.upper_bounded()[j];
                value += it.upper_multipliers[static_cast<Eigen::Index>(j)] * (z[col] - p.upper_bounds()[col]);
            }
            return value;
        };
        Vector analytic = p.lagrangian_gradient(it.x, it.eq_multipliers, w);
        for (std::size_t j = 0; j < p.lower_bounded().size(); ++j)
            analytic[p.lower_bounded()[j]] -= it.lower_multipliers[static_cast<Eigen::Index>(j)];
        for (std::size_t j = 0; j < p.upper_bounded().size(); ++j)
            analytic[p.upper_bounded()[j]] += it.upper_multipliers[static_cast<Eigen::Index>(j)];
        CHECK(max_rel_error(analytic, central_gradient(full, it.x, 1e-6)) <= 1e-4);
    }
}

TEST_CASE("AC OPF: stationarity holds at the returned point") {
    const NetworkCase net = load_case_file(oracle::data_path("case9.m"));
    const AcOpfProblem p(net);
    AcOpfIterate last;
    const AcOpfResult r = solve_acopf(net, {}, [&](const AcOpfIterate& it) { last = it; });
    REQUIRE(r.converged);
    Vector grad = p.lagrangian_gradient(last.x, last.eq_multipliers, 1.0 / last.objective_scale);
    for (std::size_t j = 0; j < p.lower_bounded().size(); ++j)
        grad[p.lower_bounded()[j]] -= last.lower_multipliers[static_cast<Eigen::Index>(j)];
    for (std::size_t j = 0; j < p.upper_bounded().size(); ++j)
        grad[p.upper_bounded()[j]] += last.upper_multipliers[static_cast<Eigen::Index>(j)];
    double biggest = last.eq_multipliers.cwiseAbs().maxCoeff();
    if (last.lower_multipliers.size() > 0) biggest = std::max(biggest, last.lower_multipliers.maxCoeff());
    if (last.upper_multipliers.size() > 0) biggest = std::max(biggest, last.upper_multipliers.maxCoeff());
    CHECK(grad.cwiseAbs().maxCoeff() / (1.0 + biggest) <= 1e-6);
    CHECK(last.lower_multipliers.minCoeff() >= 0.0);
    CHECK(last.upper_multipliers.minCoeff() >= 0.0);
}

TEST_CASE("AC OPF: single bus dispatches exactly the load") {
    const NetworkCase net = cases::single_bus(0.7, {cases::gen(0, 1.0, 0.5, 0.0, 2.0)});
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    CHECK(r.solution.pg[0] == doctest::Approx(0.7).epsilon(1e-8));
    CHECK(std::abs(r.solution.qg[0]) <= 1e-8);
}

TEST_CASE("AC OPF: cheaper generator carries more load") {
    NetworkCase net = cases::two_bus(0.01, 0.1, 1.0);
    net.buses[1].kind = BusKind::PV;
    net.generators.push_back(cases::gen(1, 1.0, 0.0, 0.0, 2.0));
    net.generators[1].cost_b = 5.0;
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    CHECK(r.solution.pg[0] > r.solution.pg[1]);
    CHECK(verify_acopf(r, net).passed);
}

TEST_CASE("AC OPF: insufficient capacity is reported without iterating") {
    NetworkCase net = cases::two_bus(0.01, 0.1, 1.0);
    net.generators[0].p_max = 0.5;
    const AcOpfResult r = solve_acopf(net);
    CHECK_FALSE(r.converged);
    CHECK(r.status == "infeasible_capacity");
}

TEST_CASE("AC OPF: iteration cap is honoured") {
    const NetworkCase net = load_case_file(oracle::data_path("case14.m"));
    AcOpfOptions o;
    o.max_iterations = 2;
    const AcOpfResult r = solve_acopf(net, o);
    CHECK_FALSE(r.converged);
    CHECK(r.status == "max_iterations");
    CHECK(r.iterations == 2);
}

TEST_CASE("AC OPF options are validated") {
    AcOpfOptions o;
    CHECK_NOTHROW(o.validate());
    o.barrier_shrink = 1.0;
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
    o = {};
    o.tol_kkt = 0.0;
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
    o = {};
    o.max_iterations = 0;
    CHECK_THROWS_AS(solve_acopf(load_case_file(oracle::data_path("case2.m")), o), std::invalid_argument);
}

TEST_CASE("AC branch flow at the slack end equals slack generation") {
    const NetworkCase net = cases::two_bus(0.01, 0.1, 1.0, 0.2);
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    const Vector flows = ac_branch_flows(net, r.solution.v_mag, r.solution.theta);
    REQUIRE(flows.size() == 1);
    CHECK(std::abs(flows[0] - r.solution.pg[0]) <= 1e-8);
    CHECK(std::abs(flows[0] - 1.0 - branch_losses(net, r.solution.v_mag, r.solution.theta)[0]) <= 1e-8);
}

TEST_CASE("AC OPF verification rejects a perturbed solution") {
    const NetworkCase net = load_case_file(oracle::data_path("case14.m"));
    AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    REQUIRE(verify_acopf(r, net).max_residual <= 1e-8);
    for (Eigen::Index i = 0; i < r.solution.theta.size(); ++i)
        if (static_cast<std::size_t>(i) != net.slack_bus()) r.solution.theta[i] += 1e-3 * static_cast<double>(i);
    const AcOpfVerification v = verify_acopf(r, net);
    CHECK_FALSE(v.passed);
    CHECK(v.max_residual > 1e-4);
}

TEST_CASE("AC OPF: losses equal the branch and shunt dissipation") {
    for (const char* name : kFixtures) {
        CAPTURE(name);
        const NetworkCase net = load_case_file(oracle::data_path(name));
        const AcOpfResult r = solve_acopf(net);
        REQUIRE(r.converged);
        const double dissipated =
            branch_losses(net, r.solution.v_mag, r.solution.theta).sum() + shunt_losses(net, r.solution.v_mag);
        CHECK(std::abs(r.solution.total_gen - r.solution.total_load - dissipated) <= 1e-7);
    }
}

TEST_CASE("AC OPF: two-bus generation covers load plus the oracle loss") {
    const NetworkCase net = cases::two_bus(0.01, 0.1, 1.0, 0.2);
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    const oracle::TwoBusSolution ref = oracle::two_bus(0.01, 0.1, 1.0, 0.2, r.solution.v_mag[0]);
    CHECK(std::abs(r.solution.v_mag[1] - ref.v2) <= 1e-8);
    CHECK(std::abs(r.solution.pg[0] - 1.0 - ref.loss) <= 1e-8);
}

TEST_CASE("AC OPF: unloaded network without shunts has no losses") {
    NetworkCase net = cases::two_bus(0.01, 0.1, 0.0);
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    const AcOpfVerification v = verify_acopf(r, net);
    CHECK(v.passed);
    CHECK(std::abs(v.losses) <= 1e-8);
    CHECK(std::abs(r.solution.pg[0]) <= 1e-8);
}

TEST_CASE("AC OPF: identical inputs give an identical iterate sequence") {
    const NetworkCase net = load_case_file(oracle::data_path("case9.m"));
    std::vector<Vector> first, second;
    const AcOpfResult a = solve_acopf(net, {}, [&](const AcOpfIterate& it) { first.push_back(it.x); });
    const AcOpfResult b = solve_acopf(net, {}, [&](const AcOpfIterate& it) { second.push_back(it.x); });
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].objective == b.trace[i].objective);
        CHECK(a.trace[i].kkt_norm == b.trace[i].kkt_norm);
    }
}

TEST_CASE("AC OPF: feasible dispatch perturbations never beat the optimum") {
    const NetworkCase net = load_case_file(oracle::data_path("case14.m"));
    const AcOpfResult r = solve_acopf(net);
    REQUIRE(r.converged);
    const double tol = AcOpfOptions{}.tol_kkt * 10.0;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> step(-1e-3, 1e-3);
    int feasible = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Vector pg = r.solution.pg;
        for (std::size_t k = 0; k < net.generator_count(); ++k)
            if (net.generators[k].bus != net.slack_bus()) pg[static_cast<Eigen::Index>(k)] += step(rng);
        const PfSolution pf = solve_newton_pf(net, {pg, r.solution.v_mag}, {.enforce_q_limits = false});
        if (!pf.converged) continue;
        bool inside = true;
        for (std::size_t k = 0; k < net.generator_count(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const Generator& g = net.generators[k];
            inside = inside && pf.pg[kk] >= g.p_min && pf.pg[kk] <= g.p_max && pf.qg[kk] >= g.q_min && pf.qg[kk] <= g.q_max;
        }
        if (!inside) continue;
        ++feasible;
        double cost = 0.0;
        for (std::size_t k = 0; k < net.generator_count(); ++k) cost += net.generators[k].cost(pf.pg[static_cast<Eigen::Index>(k)]);
        CHECK(cost >= r.solution.objective - tol);
    }
    CHECK(feasible > 0);
}
