#include "opflab/acopf.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "opflab/injections.hpp"
#include "opflab/power_flow.hpp"

namespace opflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStepFraction = 0.99995;
constexpr double kBoundRelaxation = 1e-9;
constexpr double kBarrierErrorFactor = 10.0;

double inf_norm(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

double interior_start(double lo, double hi, double preferred) {
    if (std::isfinite(lo) && std::isfinite(hi)) {
        const double margin = 0.25 * (hi - lo);
        if (preferred > lo + margin && preferred < hi - margin) return preferred;
        return 0.5 * (lo + hi);
    }
    if (std::isfinite(lo)) return std::max(preferred, lo + 1.0);
    if (std::isfinite(hi)) return std::min(preferred, hi - 1.0);
    return preferred;
}

}  // namespace

void AcOpfOptions::validate() const {
    if (!(tol_kkt > 0.0) || !(tol_feas > 0.0)) throw std::invalid_argument("AC OPF tolerances must be positive");
    if (max_iterations <= 0) throw std::invalid_argument("AC OPF max_iterations must be positive");
    if (!(barrier_initial > 0.0)) throw std::invalid_argument("AC OPF barrier_initial must be positive");
    if (!(barrier_shrink > 0.0 && barrier_shrink < 1.0))
        throw std::invalid_argument("AC OPF barrier_shrink must lie in (0, 1)");
}

AcOpfProblem::AcOpfProblem(const NetworkCase& net)
    : net_(net), y_(build_admittance(net)) {
    n_ = static_cast<Eigen::Index>(net.bus_count());
    ng_ = static_cast<Eigen::Index>(net.generator_count());
    slack_ = static_cast<Eigen::Index>(net.slack_bus());
    theta_col_.assign(static_cast<std::size_t>(n_), -1);
    for (Eigen::Index i = 0; i < n_; ++i) {
        if (i == slack_) continue;
        theta_col_[static_cast<std::size_t>(i)] = n_theta_++;
    }
    nx_ = n_theta_ + n_ + 2 * ng_;

    lower_ = Vector::Constant(nx_, -kInf);
    upper_ = Vector::Constant(nx_, kInf);
    for (Eigen::Index i = 0; i < n_; ++i) {
        const auto& bus = net.buses[static_cast<std::size_t>(i)];
        lower_[v_col(i)] = bus.v_min;
        upper_[v_col(i)] = bus.v_max;
    }
    for (Eigen::Index k = 0; k < ng_; ++k) {
        const auto& gen = net.generators[static_cast<std::size_t>(k)];
        lower_[pg_col(k)] = gen.p_min;
        upper_[pg_col(k)] = gen.p_max;
        lower_[qg_col(k)] = gen.q_min;
        upper_[qg_col(k)] = gen.q_max;
    }
    for (Eigen::Index j = 0; j < nx_; ++j) {
        if (lower_[j] == upper_[j]) {
            fixed_.push_back(j);
            continue;
        }
        if (std::isfinite(lower_[j])) lower_bounded_.push_back(j);
        if (std::isfinite(upper_[j])) upper_bounded_.push_back(j);
    }
}

Vector AcOpfProblem::initial_point() const {
    Vector x = Vector::Zero(nx_);
    for (Eigen::Index i = 0; i < n_; ++i) x[v_col(i)] = 1.0;
    for (Eigen::Index k = 0; k < ng_; ++k) {
        x[pg_col(k)] = 0.5 * (lower_[pg_col(k)] + upper_[pg_col(k)]);
        x[qg_col(k)] = 0.5 * (lower_[qg_col(k)] + upper_[qg_col(k)]);
    }
    for (Eigen::Index j = n_theta_; j < nx_; ++j) {
        if (lower_[j] == upper_[j]) {
            x[j] = lower_[j];
        } else {
            x[j] = interior_start(lower_[j], upper_[j], std::isfinite(x[j]) ? x[j] : 0.0);
        }
    }
    return x;
}

Vector AcOpfProblem::theta(const Vector& x) const {
    Vector t = Vector::Zero(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
        const auto col = theta_col_[static_cast<std::size_t>(i)];
        if (col >= 0) t[i] = x[col];
    }
    return t;
}

Vector AcOpfProblem::v_mag(const Vector& x) const { return x.segment(n_theta_, n_); }
Vector AcOpfProblem::pg(const Vector& x) const { return x.segment(n_theta_ + n_, ng_); }
Vector AcOpfProblem::qg(const Vector& x) const { return x.segment(n_theta_ + n_ + ng_, ng_); }

double AcOpfProblem::objective(const Vector& x) const {
    double f = 0.0;
    for (Eigen::Index k = 0; k < ng_; ++k) f += net_.generators[static_cast<std::size_t>(k)].cost(x[pg_col(k)]);
    return f;
}

Vector AcOpfProblem::objective_gradient(const Vector& x) const {
    Vector grad = Vector::Zero(nx_);
    for (Eigen::Index k = 0; k < ng_; ++k)
        grad[pg_col(k)] = net_.generators[static_cast<std::size_t>(k)].marginal_cost(x[pg_col(k)]);
    return grad;
}

Vector AcOpfProblem::constraints(const Vector& x) const {
    const Vector v = v_mag(x);
    const Injections inj = compute_injections(y_, v, theta(x));
    Vector g(equality_count());
    for (Eigen::Index i = 0; i < n_; ++i) {
        const auto& bus = net_.buses[static_cast<std::size_t>(i)];
        g[i] = inj.p[i] + bus.p_load;
        g[n_ + i] = inj.q[i] + bus.q_load;
    }
    for (Eigen::Index k = 0; k < ng_; ++k) {
        const auto bus = static_cast<Eigen::Index>(net_.generators[static_cast<std::size_t>(k)].bus);
        g[bus] -= x[pg_col(k)];
        g[n_ + bus] -= x[qg_col(k)];
    }
    for (std::size_t r = 0; r < fixed_.size(); ++r)
        g[2 * n_ + static_cast<Eigen::Index>(r)] = x[fixed_[r]] - lower_[fixed_[r]];
    return g;
}

Matrix AcOpfProblem::constraint_jacobian(const Vector& x) const {
    const InjectionJacobian jac = injection_jacobian(y_, v_mag(x), theta(x));
    Matrix j = Matrix::Zero(equality_count(), nx_);
    for (Eigen::Index m = 0; m < n_; ++m) {
        const auto tcol = theta_col_[static_cast<std::size_t>(m)];
        if (tcol >= 0) {
            j.col(tcol).head(n_) = jac.dp_dtheta.col(m);
            j.col(tcol).segment(n_, n_) = jac.dq_dtheta.col(m);
        }
        j.col(v_col(m)).head(n_) = jac.dp_dv.col(m);
        j.col(v_col(m)).segment(n_, n_) = jac.dq_dv.col(m);
    }
    for (Eigen::Index k = 0; k < ng_; ++k) {
        const auto bus = static_cast<Eigen::Index>(net_.generators[static_cast<std::size_t>(k)].bus);
        j(bus, pg_col(k)) = -1.0;
        j(n_ + bus, qg_col(k)) = -1.0;
    }
    for (std::size_t r = 0; r < fixed_.size(); ++r) j(2 * n_ + static_cast<Eigen::Index>(r), fixed_[r]) = 1.0;
    return j;
}

double AcOpfProblem::lagrangian(const Vector& x, const Vector& eq_multipliers, double objective_weight) const {
    return objective_weight * objective(x) + eq_multipliers.dot(constraints(x));
}

Vector AcOpfProblem::lagrangian_gradient(const Vector& x, const Vector& eq_multipliers,
                                         double objective_weight) const {
    return objective_weight * objective_gradient(x) + constraint_jacobian(x).transpose() * eq_multipliers;
}

Matrix AcOpfProblem::lagrangian_hessian(const Vector& x, const Vector& eq_multipliers,
                                        double objective_weight) const {
    const Matrix inj = weighted_injection_hessian(y_, v_mag(x), theta(x), eq_multipliers.head(n_),
                                                  eq_multipliers.segment(n_, n_));
    std::vector<Eigen::Index> col(static_cast<std::size_t>(2 * n_));
    for (Eigen::Index a = 0; a < n_; ++a) {
        col[static_cast<std::size_t>(a)] = theta_col_[static_cast<std::size_t>(a)];
        col[static_cast<std::size_t>(n_ + a)] = v_col(a);
    }
    Matrix h = Matrix::Zero(nx_, nx_);
    for (Eigen::Index a = 0; a < 2 * n_; ++a) {
        const auto ca = col[static_cast<std::size_t>(a)];
        if (ca < 0) continue;
        for (Eigen::Index b = 0; b < 2 * n_; ++b) {
            const auto cb = col[static_cast<std::size_t>(b)];
            if (cb >= 0) h(ca, cb) = inj(a, b);
        }
    }
    for (Eigen::Index k = 0; k < ng_; ++k)
        h(pg_col(k), pg_col(k)) += 2.0 * objective_weight * net_.generators[static_cast<std::size_t>(k)].cost_a;
    return h;
}

namespace {

// Solves [M J'; J 0] [dx; dl] = rhs, shifting M until the matrix has
// exactly nx positive and neq negative eigenvalues. The primal block is
// symmetrically scaled by its diagonal first, which keeps the inertia.
Vector solve_kkt(const Matrix& m, const Matrix& j, const Vector& rhs) {
    const auto nx = m.rows();
    const auto neq = j.rows();
    const auto dim = nx + neq;
    const Vector d = m.diagonal().cwiseAbs().cwiseMax(1.0).cwiseSqrt().cwiseInverse();
    const Matrix ms = d.asDiagonal() * m * d.asDiagonal();
    const Matrix js = j * d.asDiagonal();
    Vector rs = rhs;
    rs.head(nx) = d.cwiseProduct(rhs.head(nx));
    double shift = 0.0;
    double reg = 0.0;
    const double scale = std::max(1.0, ms.cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 30; ++attempt) {
        Matrix k = Matrix::Zero(dim, dim);
        k.topLeftCorner(nx, nx) = ms;
        k.topLeftCorner(nx, nx).diagonal().array() += shift;
        k.topRightCorner(nx, neq) = js.transpose();
        k.bottomLeftCorner(neq, nx) = js;
        k.bottomRightCorner(neq, neq).diagonal().setConstant(-reg);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
        const Vector& ev = eig.eigenvalues();
        const double zero_tol = 1e-13 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        Eigen::Index pos = 0;
        Eigen::Index neg = 0;
        for (Eigen::Index e = 0; e < dim; ++e) {
            if (ev[e] > zero_tol) ++pos;
            else if (ev[e] < -zero_tol) ++neg;
        }
        if (pos == nx && neg == neq) {
            const Vector coeffs = eig.eigenvectors().transpose() * rs;
            Vector out = eig.eigenvectors() * coeffs.cwiseQuotient(ev);
            out.head(nx) = d.cwiseProduct(out.head(nx));
            return out;
        }
        if (pos + neg < dim && neg < neq) reg = std::max(reg, 1e-10 * scale);
        if (pos < nx) shift = shift == 0.0 ? 1e-6 * scale : 10.0 * shift;
    }
    throw std::runtime_error("KKT system could not be regularised");
}

}  // namespace

AcOpfResult solve_acopf(const NetworkCase& net, const AcOpfOptions& options, const AcOpfObserver& observer) {
    options.validate();
    const AcOpfProblem prob(net);
    const auto nx = prob.variable_count();
    const auto& lower_idx = prob.lower_bounded();
    const auto& upper_idx = prob.upper_bounded();
    const auto nl = static_cast<Eigen::Index>(lower_idx.size());
    const auto nu = static_cast<Eigen::Index>(upper_idx.size());

    // Barrier bounds sit slightly outside the true ones so that problems whose
    // only feasible points touch a bound keep a nonempty interior.
    Vector lo = prob.lower_bounds();
    Vector up = prob.upper_bounds();
    for (const auto col : lower_idx) lo[col] -= kBoundRelaxation * std::max(1.0, std::abs(lo[col]));
    for (const auto col : upper_idx) up[col] += kBoundRelaxation * std::max(1.0, std::abs(up[col]));

    AcOpfResult result;
    Vector x = prob.initial_point();

    auto fill_solution = [&](const Vector& point) {
        auto& s = result.solution;
        s.kind = DispatchKind::AC;
        s.pg = prob.pg(point);
        s.qg = prob.qg(point);
        s.v_mag = prob.v_mag(point);
        s.theta = prob.theta(point);
        s.branch_flows = ac_branch_flows(net, s.v_mag, s.theta);
        s.objective = prob.objective(point);
        s.total_gen = s.pg.sum();
        s.total_load = net.total_p_load();
    };

    double p_capacity = 0.0;
    for (const auto& gen : net.generators) p_capacity += gen.p_max;
    if (p_capacity < net.total_p_load()) {
        fill_solution(x);
        result.status = "infeasible_capacity";
        result.feasibility_norm = inf_norm(prob.constraints(x));
        result.kkt_norm = kInf;
        return result;
    }

    const double objective_scale = std::max(1.0, inf_norm(prob.objective_gradient(x)) / 100.0);
    const double weight = 1.0 / objective_scale;
    const double barrier_floor = 0.1 * options.tol_kkt;

    double barrier = options.barrier_initial;
    Vector z_l(nl);
    Vector z_u(nu);
    for (Eigen::Index a = 0; a < nl; ++a) z_l[a] = x[lower_idx[static_cast<std::size_t>(a)]] - lo[lower_idx[static_cast<std::size_t>(a)]];
    for (Eigen::Index a = 0; a < nu; ++a) z_u[a] = up[upper_idx[static_cast<std::size_t>(a)]] - x[upper_idx[static_cast<std::size_t>(a)]];
    Vector mu_l = barrier * z_l.cwiseInverse();
    Vector mu_u = barrier * z_u.cwiseInverse();

    auto bound_gradient = [&](const Vector& ml, const Vector& mu) {
        Vector gb = Vector::Zero(nx);
        for (Eigen::Index a = 0; a < nl; ++a) gb[lower_idx[static_cast<std::size_t>(a)]] -= ml[a];
        for (Eigen::Index a = 0; a < nu; ++a) gb[upper_idx[static_cast<std::size_t>(a)]] += mu[a];
        return gb;
    };

    Vector lambda;
    {
        const Matrix j0 = prob.constraint_jacobian(x);
        const Vector rhs = -(weight * prob.objective_gradient(x) + bound_gradient(mu_l, mu_u));
        lambda = j0.transpose().colPivHouseholderQr().solve(rhs);
    }

    result.status = "max_iterations";
    for (int iter = 0;; ++iter) {
        const Vector g = prob.constraints(x);
        const Matrix jac = prob.constraint_jacobian(x);
        const Vector lx = prob.lagrangian_gradient(x, lambda, weight) + bound_gradient(mu_l, mu_u);

        const double feas = inf_norm(g);
        const double multiplier_size = std::max({inf_norm(lambda), inf_norm(mu_l), inf_norm(mu_u)});
        const double stationarity = inf_norm(lx) / (1.0 + multiplier_size);
        const Vector comp_l = z_l.cwiseProduct(mu_l);
        const Vector comp_u = z_u.cwiseProduct(mu_u);
        const double complementarity = std::max(inf_norm(comp_l), inf_norm(comp_u));
        const double kkt = std::max(stationarity, complementarity);

        result.iterations = iter;
        result.kkt_norm = kkt;
        result.feasibility_norm = feas;
        result.trace.push_back({iter, barrier, kkt, feas, prob.objective(x)});
        if (observer) observer({iter, x, lambda, mu_l, mu_u, objective_scale, barrier});

        if (!x.allFinite()) {
            result.status = "numerical_failure";
            break;
        }
        if (feas <= options.tol_feas && kkt <= options.tol_kkt) {
            result.converged = true;
            result.status = "converged";
            break;
        }
        if (iter >= options.max_iterations) break;

        while (barrier > barrier_floor) {
            const double centrality = std::max((comp_l.array() - barrier).abs().maxCoeff(),
                                               (comp_u.array() - barrier).abs().maxCoeff());
            const double err = std::max({stationarity, feas, nl + nu > 0 ? centrality : 0.0});
            if (err > kBarrierErrorFactor * barrier) break;
            barrier = std::max(barrier_floor, options.barrier_shrink * barrier);
        }

        Matrix m = prob.lagrangian_hessian(x, lambda, weight);
        Vector nvec = lx;
        Vector h_l(nl);
        Vector h_u(nu);
        for (Eigen::Index a = 0; a < nl; ++a) {
            const auto col = lower_idx[static_cast<std::size_t>(a)];
            h_l[a] = lo[col] - x[col];
            m(col, col) += mu_l[a] / z_l[a];
            nvec[col] -= (mu_l[a] * h_l[a] + barrier) / z_l[a];
        }
        for (Eigen::Index a = 0; a < nu; ++a) {
            const auto col = upper_idx[static_cast<std::size_t>(a)];
            h_u[a] = x[col] - up[col];
            m(col, col) += mu_u[a] / z_u[a];
            nvec[col] += (mu_u[a] * h_u[a] + barrier) / z_u[a];
        }

        Vector rhs(nx + jac.rows());
        rhs << -nvec, -g;
        Vector step;
        try {
            step = solve_kkt(m, jac, rhs);
        } catch (const std::runtime_error&) {
            result.status = "numerical_failure";
            break;
        }
        const Vector dx = step.head(nx);
        const Vector dlambda = step.tail(jac.rows());

        Vector dz_l(nl);
        Vector dz_u(nu);
        for (Eigen::Index a = 0; a < nl; ++a) dz_l[a] = -h_l[a] - z_l[a] + dx[lower_idx[static_cast<std::size_t>(a)]];
        for (Eigen::Index a = 0; a < nu; ++a) dz_u[a] = -h_u[a] - z_u[a] - dx[upper_idx[static_cast<std::size_t>(a)]];
        const Vector dmu_l = -mu_l + (barrier - mu_l.cwiseProduct(dz_l).array()).matrix().cwiseQuotient(z_l);
        const Vector dmu_u = -mu_u + (barrier - mu_u.cwiseProduct(dz_u).array()).matrix().cwiseQuotient(z_u);

        auto max_step = [](const Vector& value, const Vector& delta) {
            double alpha = 1.0;
            for (Eigen::Index a = 0; a < value.size(); ++a)
                if (delta[a] < 0.0) alpha = std::min(alpha, -kStepFraction * value[a] / delta[a]);
            return alpha;
        };
        const double alpha_p = std::min(max_step(z_l, dz_l), max_step(z_u, dz_u));
        const double alpha_d = std::min(max_step(mu_l, dmu_l), max_step(mu_u, dmu_u));

        x += alpha_p * dx;
        z_l += alpha_p * dz_l;
        z_u += alpha_p * dz_u;
        lambda += alpha_d * dlambda;
        mu_l += alpha_d * dmu_l;
        mu_u += alpha_d * dmu_u;
    }

    fill_solution(x);
    return result;
}

Vector ac_branch_flows(const NetworkCase& net, const Vector& v_mag, const Vector& theta) {
    using cd = std::complex<double>;
    Vector flows(static_cast<Eigen::Index>(net.branch_count()));
    for (std::size_t k = 0; k < net.branch_count(); ++k) {
        const auto& br = net.branches[k];
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        const cd ys = 1.0 / cd(br.r, br.x);
        const cd vf = std::polar(v_mag[f], theta[f]);
        const cd vt = std::polar(v_mag[t], theta[t]);
        const cd i_from = (ys + cd(0.0, br.b_shunt / 2.0)) / (br.tap * br.tap) * vf - ys / br.tap * vt;
        flows[static_cast<Eigen::Index>(k)] = (vf * std::conj(i_from)).real();
    }
    return flows;
}

AcOpfVerification verify_acopf(const AcOpfResult& result, const NetworkCase& net, double tolerance) {
    const auto& s = result.solution;
    AcOpfVerification out;
    const AdmittanceMatrix y = build_admittance(net);
    const ResidualVector res = ac_residual(net, y, s.v_mag, s.theta, s.pg, s.qg);
    out.max_residual = res.max_abs();
    out.checks.push_back({"p_balance", res.max_abs_p(), tolerance, res.max_abs_p() <= tolerance});
    const double q_max = inf_norm(res.q_residual);
    out.checks.push_back({"q_balance", q_max, tolerance, q_max <= tolerance});

    double v_violation = 0.0;
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        v_violation = std::max({v_violation, net.buses[i].v_min - s.v_mag[idx], s.v_mag[idx] - net.buses[i].v_max});
    }
    out.checks.push_back({"voltage_bounds", v_violation, tolerance, v_violation <= tolerance});

    double p_violation = 0.0;
    double q_violation = 0.0;
    for (std::size_t k = 0; k < net.generator_count(); ++k) {
        const auto& gen = net.generators[k];
        const auto idx = static_cast<Eigen::Index>(k);
        p_violation = std::max({p_violation, gen.p_min - s.pg[idx], s.pg[idx] - gen.p_max});
        q_violation = std::max({q_violation, gen.q_min - s.qg[idx], s.qg[idx] - gen.q_max});
    }
    out.checks.push_back({"pg_bounds", p_violation, tolerance, p_violation <= tolerance});
    out.checks.push_back({"qg_bounds", q_violation, tolerance, q_violation <= tolerance});

    out.losses = s.pg.sum() - net.total_p_load();
    const double network_losses = branch_losses(net, s.v_mag, s.theta).sum() + shunt_losses(net, s.v_mag);
    const double loss_gap = std::abs(out.losses - network_losses);
    const double loss_tol = tolerance * static_cast<double>(net.bus_count());
    out.checks.push_back({"loss_consistency", loss_gap, loss_tol, loss_gap <= loss_tol});

    out.passed = std::all_of(out.checks.begin(), out.checks.end(), [](const auto& c) { return c.passed; });
    return out;
}

}  // namespace opflab
