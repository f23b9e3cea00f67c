#include "opflab/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "opflab/injections.hpp"

namespace opflab {

double ResidualVector::max_abs() const {
    double m = 0.0;
    if (p_residual.size() > 0) m = std::max(m, p_residual.cwiseAbs().maxCoeff());
    if (q_residual.size() > 0) m = std::max(m, q_residual.cwiseAbs().maxCoeff());
    return m;
}

double ResidualVector::max_abs_p() const {
    return p_residual.size() > 0 ? p_residual.cwiseAbs().maxCoeff() : 0.0;
}

std::string_view to_string(PfStatus status) {
    switch (status) {
        case PfStatus::Converged: return "converged";
        case PfStatus::MaxIterations: return "max_iterations";
        case PfStatus::SingularJacobian: return "singular_jacobian";
    }
    return "max_iterations";
}

namespace {

Vector bus_sum(const NetworkCase& net, const Vector& per_gen) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(net.bus_count()));
    for (std::size_t k = 0; k < net.generator_count(); ++k)
        out[static_cast<Eigen::Index>(net.generators[k].bus)] += per_gen[static_cast<Eigen::Index>(k)];
    return out;
}

Vector load_vector(const NetworkCase& net, bool active) {
    Vector out(static_cast<Eigen::Index>(net.bus_count()));
    for (std::size_t i = 0; i < net.bus_count(); ++i)
        out[static_cast<Eigen::Index>(i)] = active ? net.buses[i].p_load : net.buses[i].q_load;
    return out;
}

}  // namespace

ResidualVector ac_residual(const NetworkCase& net, const AdmittanceMatrix& y, const Vector& v_mag,
                           const Vector& theta, const Vector& pg, const Vector& qg) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    if (v_mag.size() != n || theta.size() != n)
        throw std::invalid_argument("ac_residual: voltage vectors must have one entry per bus");
    if (pg.size() != static_cast<Eigen::Index>(net.generator_count()) || qg.size() != pg.size())
        throw std::invalid_argument("ac_residual: generator vectors must have one entry per generator");
    const auto inj = compute_injections(y, v_mag, theta);
    return {inj.p - (bus_sum(net, pg) - load_vector(net, true)), inj.q - (bus_sum(net, qg) - load_vector(net, false))};
}

PfDispatch nominal_dispatch(const NetworkCase& net) {
    PfDispatch d;
    d.pg = Vector(static_cast<Eigen::Index>(net.generator_count()));
    d.v_set = Vector::Ones(static_cast<Eigen::Index>(net.bus_count()));
    std::vector<bool> set(net.bus_count(), false);
    for (std::size_t k = 0; k < net.generator_count(); ++k) {
        const auto& gen = net.generators[k];
        d.pg[static_cast<Eigen::Index>(k)] = gen.pg;
        if (!set[gen.bus]) {
            d.v_set[static_cast<Eigen::Index>(gen.bus)] = gen.v_set;
            set[gen.bus] = true;
        }
    }
    return d;
}

Vector split_reactive(const NetworkCase& net, const Vector& bus_q_gen) {
    Vector qg = Vector::Zero(static_cast<Eigen::Index>(net.generator_count()));
    const auto at_bus = net.generators_by_bus();
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        const auto& gens = at_bus[i];
        if (gens.empty()) continue;
        double qmin = 0.0, qmax = 0.0;
        for (auto k : gens) {
            qmin += net.generators[k].q_min;
            qmax += net.generators[k].q_max;
        }
        const double total = std::clamp(bus_q_gen[static_cast<Eigen::Index>(i)], qmin, qmax);
        const double range = qmax - qmin;
        for (auto k : gens) {
            const auto& gen = net.generators[k];
            const double share = range > 0.0 ? (gen.q_max - gen.q_min) / range : 1.0 / static_cast<double>(gens.size());
            qg[static_cast<Eigen::Index>(k)] = gen.q_min + share * (total - qmin);
        }
    }
    return qg;
}

PfSolution solve_newton_pf(const NetworkCase& net, const PfDispatch& dispatch, const PfOptions& options) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const auto ng = static_cast<Eigen::Index>(net.generator_count());
    if (dispatch.pg.size() != ng) throw std::invalid_argument("solve_newton_pf: pg must have one entry per generator");
    if (dispatch.v_set.size() != n) throw std::invalid_argument("solve_newton_pf: v_set must have one entry per bus");

    const auto y = build_admittance(net);
    const auto slack = static_cast<Eigen::Index>(net.slack_bus());
    const auto at_bus = net.generators_by_bus();

    // Regulated buses: slack and PV buses that actually host a generator.
    std::vector<bool> regulated(static_cast<std::size_t>(n), false);
    std::vector<double> q_fixed(static_cast<std::size_t>(n), 0.0);  // generation held at a limit
    std::vector<int> limited(static_cast<std::size_t>(n), 0);        // -1 at q_min, +1 at q_max
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        regulated[ui] = i == slack || (net.buses[ui].kind == BusKind::PV && !at_bus[ui].empty());
    }

    Vector v = options.v_start.value_or(Vector::Ones(n));
    Vector theta = options.theta_start.value_or(Vector::Zero(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (regulated[static_cast<std::size_t>(i)]) v[i] = dispatch.v_set[i];
    }
    theta[slack] = 0.0;

    const Vector p_gen = bus_sum(net, dispatch.pg);
    const Vector p_spec = p_gen - load_vector(net, true);
    const Vector q_load = load_vector(net, false);

    PfSolution sol;
    int switches_left = options.max_q_limit_rounds;
    std::vector<int> switch_count(static_cast<std::size_t>(n), 0);

    while (true) {
        std::vector<Eigen::Index> angle_buses, magnitude_buses;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i != slack) angle_buses.push_back(i);
            if (!regulated[static_cast<std::size_t>(i)] && i != slack) magnitude_buses.push_back(i);
        }
        const auto na = static_cast<Eigen::Index>(angle_buses.size());
        const auto nm = static_cast<Eigen::Index>(magnitude_buses.size());

        Vector q_spec = -q_load;
        for (Eigen::Index i = 0; i < n; ++i) q_spec[i] += q_fixed[static_cast<std::size_t>(i)];

        auto mismatch = [&](const Injections& inj) {
            Vector f(na + nm);
            for (Eigen::Index a = 0; a < na; ++a) f[a] = inj.p[angle_buses[a]] - p_spec[angle_buses[a]];
            for (Eigen::Index b = 0; b < nm; ++b) f[na + b] = inj.q[magnitude_buses[b]] - q_spec[magnitude_buses[b]];
            return f;
        };

        auto inj = compute_injections(y, v, theta);
        Vector f = mismatch(inj);
        double norm = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
        sol.status = PfStatus::MaxIterations;
        int round_iterations = 0;
        while (norm > options.tolerance && round_iterations < options.max_iterations) {
            const auto jac = injection_jacobian(y, v, theta);
            Matrix j(na + nm, na + nm);
            for (Eigen::Index r = 0; r < na; ++r) {
                for (Eigen::Index c = 0; c < na; ++c) j(r, c) = jac.dp_dtheta(angle_buses[r], angle_buses[c]);
                for (Eigen::Index c = 0; c < nm; ++c) j(r, na + c) = jac.dp_dv(angle_buses[r], magnitude_buses[c]);
            }
            for (Eigen::Index r = 0; r < nm; ++r) {
                for (Eigen::Index c = 0; c < na; ++c) j(na + r, c) = jac.dq_dtheta(magnitude_buses[r], angle_buses[c]);
                for (Eigen::Index c = 0; c < nm; ++c) j(na + r, na + c) = jac.dq_dv(magnitude_buses[r], magnitude_buses[c]);
            }
            Eigen::FullPivLU<Matrix> lu(j);
            if (!lu.isInvertible()) {
                sol.status = PfStatus::SingularJacobian;
                break;
            }
            const Vector dx = lu.solve(-f);
            for (Eigen::Index a = 0; a < na; ++a) theta[angle_buses[a]] += dx[a];
            for (Eigen::Index b = 0; b < nm; ++b) v[magnitude_buses[b]] += dx[na + b];
            ++round_iterations;
            ++sol.iterations;
            inj = compute_injections(y, v, theta);
            f = mismatch(inj);
            norm = f.cwiseAbs().maxCoeff();
        }
        sol.final_residual_norm = norm;
        const bool converged = norm <= options.tolerance && sol.status != PfStatus::SingularJacobian;
        if (converged) sol.status = PfStatus::Converged;

        // Reactive limit handling: PV -> PQ when generation leaves its range,
        // PQ -> PV when the voltage moves back to the regulated side.
        bool switched = false;
        if (converged && options.enforce_q_limits && switches_left > 0) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                if (i == slack || at_bus[ui].empty() || net.buses[ui].kind != BusKind::PV) continue;
                if (switch_count[ui] >= 3) continue;
                double qmin = 0.0, qmax = 0.0;
                for (auto k : at_bus[ui]) {
                    qmin += net.generators[k].q_min;
                    qmax += net.generators[k].q_max;
                }
                if (regulated[ui]) {
                    const double q_gen = inj.q[i] + q_load[i];
                    if (q_gen > qmax + options.tolerance || q_gen < qmin - options.tolerance) {
                        regulated[ui] = false;
                        limited[ui] = q_gen > qmax ? 1 : -1;
                        q_fixed[ui] = q_gen > qmax ? qmax : qmin;
                        ++switch_count[ui];
                        switched = true;
                    }
                } else if ((limited[ui] > 0 && v[i] > dispatch.v_set[i]) ||
                           (limited[ui] < 0 && v[i] < dispatch.v_set[i])) {
                    regulated[ui] = true;
                    limited[ui] = 0;
                    q_fixed[ui] = 0.0;
                    v[i] = dispatch.v_set[i];
                    ++switch_count[ui];
                    switched = true;
                }
            }
        }
        if (!switched) {
            sol.converged = converged;
            break;
        }
        --switches_left;
    }

    const auto inj = compute_injections(y, v, theta);
    sol.v_mag = v;
    sol.theta = theta;
    sol.pg = dispatch.pg;
    const auto us = static_cast<std::size_t>(slack);
    const double slack_gen = inj.p[slack] + net.buses[us].p_load;
    if (!at_bus[us].empty()) {
        double others = 0.0;
        for (std::size_t idx = 1; idx < at_bus[us].size(); ++idx) others += dispatch.pg[static_cast<Eigen::Index>(at_bus[us][idx])];
        sol.pg[static_cast<Eigen::Index>(at_bus[us].front())] = slack_gen - others;
    }
    sol.slack_p = slack_gen;
    sol.slack_q = inj.q[slack] + net.buses[us].q_load;

    Vector bus_q_gen = inj.q + q_load;
    sol.qg = split_reactive(net, bus_q_gen);
    // The slack bus output is not clipped: it absorbs whatever is required.
    if (!at_bus[us].empty()) {
        double others = 0.0;
        for (std::size_t idx = 1; idx < at_bus[us].size(); ++idx) others += sol.qg[static_cast<Eigen::Index>(at_bus[us][idx])];
        sol.qg[static_cast<Eigen::Index>(at_bus[us].front())] = sol.slack_q - others;
    }

    sol.losses_p = inj.p.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (limited[static_cast<std::size_t>(i)] != 0) sol.q_limited_buses.push_back(static_cast<std::size_t>(i));
    }
    return sol;
}

double total_losses(const PfSolution& pf, const NetworkCase& net) {
    if (!pf.converged) throw std::logic_error("total_losses: power flow did not converge");
    return pf.pg.sum() - net.total_p_load();
}

Vector branch_losses(const NetworkCase& net, const Vector& v_mag, const Vector& theta) {
    using cplx = std::complex<double>;
    Vector losses(static_cast<Eigen::Index>(net.branch_count()));
    for (std::size_t k = 0; k < net.branch_count(); ++k) {
        const auto& br = net.branches[k];
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const cplx charging(0.0, br.b_shunt / 2.0);
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        const cplx vf = std::polar(v_mag[f], theta[f]);
        const cplx vt = std::polar(v_mag[t], theta[t]);
        const cplx i_from = (ys + charging) / (br.tap * br.tap) * vf - ys / br.tap * vt;
        const cplx i_to = (ys + charging) * vt - ys / br.tap * vf;
        losses[static_cast<Eigen::Index>(k)] = (vf * std::conj(i_from) + vt * std::conj(i_to)).real();
    }
    return losses;
}

double shunt_losses(const NetworkCase& net, const Vector& v_mag) {
    double total = 0.0;
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        const double vi = v_mag[static_cast<Eigen::Index>(i)];
        total += net.buses[i].g_shunt * vi * vi;
    }
    return total;
}

ResidualVector evaluate_dc_point(const NetworkCase& net, const AdmittanceMatrix& y, const Vector& theta_dc,
                                 const Vector& pg_dc, const std::optional<Vector>& qg) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    const Vector ones = Vector::Ones(n);
    if (qg) return ac_residual(net, y, ones, theta_dc, pg_dc, *qg);
    const auto inj = compute_injections(y, ones, theta_dc);
    const Vector needed = inj.q + load_vector(net, false);
    return ac_residual(net, y, ones, theta_dc, pg_dc, split_reactive(net, needed));
}

}  // namespace opflab
