#include "opflab/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace opflab {

InfeasibleError::InfeasibleError(const std::string& message, std::vector<std::string> violated)
    : std::runtime_error(message), violated_(std::move(violated)) {}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One side of a constraint written as a'x >= beta.
struct Side {
    Vector a;
    double beta = 0.0;
    int constraint = -1;  // index into QpProblem::constraints, -1 for internal rows
    bool upper = false;
};

struct Workspace {
    Matrix hessian;
    Vector linear;
    Matrix eq;
    Vector eq_rhs;
    std::vector<Side> sides;
};

struct ActiveSetOutcome {
    Vector x;
    std::vector<int> working;  // indices into sides
    Vector eq_multipliers;
    Vector side_multipliers;   // aligned with working
    int iterations = 0;
};

double inf_norm(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

ActiveSetOutcome run_active_set(const Workspace& ws, Vector x, int max_iterations) {
    const auto n = x.size();
    const auto n_eq = ws.eq.rows();
    std::vector<int> working;
    std::vector<bool> in_working(ws.sides.size(), false);

    ActiveSetOutcome out;
    for (int iter = 0; iter < max_iterations; ++iter) {
        out.iterations = iter + 1;
        const auto k = n_eq + static_cast<Eigen::Index>(working.size());
        Matrix rows(k, n);
        if (n_eq > 0) rows.topRows(n_eq) = ws.eq;
        for (std::size_t w = 0; w < working.size(); ++w)
            rows.row(n_eq + static_cast<Eigen::Index>(w)) = ws.sides[static_cast<std::size_t>(working[w])].a.transpose();

        const Vector g = ws.hessian * x + ws.linear;
        const double g_scale = 1.0 + inf_norm(g);

        Matrix z;
        Eigen::ColPivHouseholderQR<Matrix> qr;
        if (k == 0) {
            z = Matrix::Identity(n, n);
        } else {
            qr.compute(rows.transpose());
            const Matrix q = qr.householderQ();
            z = q.rightCols(n - qr.rank());
        }

        Vector p = Vector::Zero(n);
        double natural_step = 1.0;
        if (z.cols() > 0) {
            Matrix reduced = z.transpose() * ws.hessian * z;
            reduced = 0.5 * (reduced + reduced.transpose());
            const Vector gr = z.transpose() * g;
            Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced);
            const Vector& lambda = eig.eigenvalues();
            const Matrix& u = eig.eigenvectors();
            const double curvature_tol = 1e-10 * std::max(1.0, lambda.cwiseAbs().maxCoeff());

            Vector flat = Vector::Zero(gr.size());
            Vector newton = Vector::Zero(gr.size());
            for (Eigen::Index e = 0; e < lambda.size(); ++e) {
                const double proj = u.col(e).dot(gr);
                if (lambda[e] <= curvature_tol) {
                    flat -= proj * u.col(e);
                } else {
                    newton -= (proj / lambda[e]) * u.col(e);
                }
            }
            if (inf_norm(flat) > 1e-11 * g_scale) {
                p = z * flat;
                natural_step = kInf;
            } else {
                p = z * newton;
            }
        }

        if (inf_norm(p) <= 1e-13 * (1.0 + inf_norm(x))) {
            Vector mult = Vector::Zero(k);
            if (k > 0) mult = qr.solve(g);
            int drop = -1;
            double most_negative = -1e-10 * g_scale;
            for (std::size_t w = 0; w < working.size(); ++w) {
                const double mu = mult[n_eq + static_cast<Eigen::Index>(w)];
                if (mu < most_negative) {
                    most_negative = mu;
                    drop = static_cast<int>(w);
                }
            }
            if (drop < 0) {
                out.x = x;
                out.working = working;
                out.eq_multipliers = mult.head(n_eq);
                out.side_multipliers = mult.tail(static_cast<Eigen::Index>(working.size()));
                return out;
            }
            in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = false;
            working.erase(working.begin() + drop);
            continue;
        }

        double step = natural_step;
        int blocking = -1;
        for (std::size_t s = 0; s < ws.sides.size(); ++s) {
            if (in_working[s]) continue;
            const double slope = ws.sides[s].a.dot(p);
            if (slope >= -1e-14 * ws.sides[s].a.cwiseAbs().maxCoeff() * inf_norm(p)) continue;
            const double room = std::max(0.0, ws.sides[s].a.dot(x) - ws.sides[s].beta);
            const double alpha = room / -slope;
            if (alpha < step) {
                step = alpha;
                blocking = static_cast<int>(s);
            }
        }
        if (!std::isfinite(step)) throw SolverError("quadratic program is unbounded below");
        x += step * p;
        if (blocking >= 0) {
            working.push_back(blocking);
            in_working[static_cast<std::size_t>(blocking)] = true;
        }
    }
    throw SolverError("active-set iteration limit reached");
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpOptions& options) {
    const auto n = problem.linear.size();
    if (problem.hessian.rows() != n || problem.hessian.cols() != n)
        throw std::invalid_argument("solve_qp: Hessian dimension mismatch");
    if (problem.eq.rows() > 0 && problem.eq.cols() != n) throw std::invalid_argument("solve_qp: equality dimension mismatch");

    const double tol = options.feasibility_tolerance;
    Workspace ws{problem.hessian, problem.linear, problem.eq.rows() > 0 ? problem.eq : Matrix(0, n),
                 problem.eq.rows() > 0 ? problem.eq_rhs : Vector(0), {}};
    for (std::size_t j = 0; j < problem.constraints.size(); ++j) {
        const auto& c = problem.constraints[j];
        if (c.row.size() != n) throw std::invalid_argument("solve_qp: constraint '" + c.label + "' has wrong length");
        if (c.lo > c.hi) throw InfeasibleError("constraint '" + c.label + "' has lo > hi", {c.label});
        if (std::isfinite(c.lo)) ws.sides.push_back({c.row, c.lo, static_cast<int>(j), false});
        if (std::isfinite(c.hi)) ws.sides.push_back({-c.row, -c.hi, static_cast<int>(j), true});
    }

    // Start on the equality manifold.
    Vector x = options.initial_guess.value_or(Vector::Zero(n));
    if (x.size() != n) throw std::invalid_argument("solve_qp: initial guess has wrong length");
    if (ws.eq.rows() > 0) {
        const Vector shift = ws.eq.completeOrthogonalDecomposition().solve(ws.eq * x - ws.eq_rhs);
        x -= shift;
        if (inf_norm(ws.eq * x - ws.eq_rhs) > tol) throw InfeasibleError("equality constraints are inconsistent", {});
    }

    int iterations = 0;
    std::vector<int> violated_sides;
    for (std::size_t s = 0; s < ws.sides.size(); ++s) {
        if (ws.sides[s].a.dot(x) < ws.sides[s].beta - tol) violated_sides.push_back(static_cast<int>(s));
    }

    if (!violated_sides.empty()) {
        // Phase 1: minimise the sum of elastic violations t >= 0.
        const auto nt = static_cast<Eigen::Index>(violated_sides.size());
        Workspace ph1;
        ph1.hessian = Matrix::Zero(n + nt, n + nt);
        ph1.linear = Vector::Zero(n + nt);
        ph1.linear.tail(nt).setOnes();
        ph1.eq = Matrix::Zero(ws.eq.rows(), n + nt);
        if (ws.eq.rows() > 0) ph1.eq.leftCols(n) = ws.eq;
        ph1.eq_rhs = ws.eq_rhs;
        Vector x1 = Vector::Zero(n + nt);
        x1.head(n) = x;
        std::vector<int> elastic_of(ws.sides.size(), -1);
        for (Eigen::Index e = 0; e < nt; ++e) elastic_of[static_cast<std::size_t>(violated_sides[static_cast<std::size_t>(e)])] = static_cast<int>(e);
        for (std::size_t s = 0; s < ws.sides.size(); ++s) {
            Side side{Vector::Zero(n + nt), ws.sides[s].beta, ws.sides[s].constraint, ws.sides[s].upper};
            side.a.head(n) = ws.sides[s].a;
            if (elastic_of[s] >= 0) {
                side.a[n + elastic_of[s]] = 1.0;
                x1[n + elastic_of[s]] = ws.sides[s].beta - ws.sides[s].a.dot(x);
            }
            ph1.sides.push_back(side);
        }
        for (Eigen::Index e = 0; e < nt; ++e) {
            Side nonneg{Vector::Zero(n + nt), 0.0, -1, false};
            nonneg.a[n + e] = 1.0;
            ph1.sides.push_back(nonneg);
        }
        const auto phase1 = run_active_set(ph1, x1, options.max_iterations);
        iterations += phase1.iterations;
        std::vector<std::string> still_violated;
        double total = 0.0;
        for (Eigen::Index e = 0; e < nt; ++e) {
            const double t = phase1.x[n + e];
            total += t;
            if (t > tol) {
                const auto& side = ws.sides[static_cast<std::size_t>(violated_sides[static_cast<std::size_t>(e)])];
                still_violated.push_back(problem.constraints[static_cast<std::size_t>(side.constraint)].label +
                                         (side.upper ? ":upper" : ":lower"));
            }
        }
        if (total > tol) throw InfeasibleError("no point satisfies all constraints", still_violated);
        x = phase1.x.head(n);
    }

    const auto phase2 = run_active_set(ws, x, options.max_iterations);
    iterations += phase2.iterations;

    QpResult result;
    result.x = phase2.x;
    result.iterations = iterations;
    result.eq_multipliers = phase2.eq_multipliers;
    result.constraint_multipliers = Vector::Zero(static_cast<Eigen::Index>(problem.constraints.size()));
    result.objective = 0.5 * result.x.dot(problem.hessian * result.x) + problem.linear.dot(result.x);

    Vector stationarity = problem.hessian * result.x + problem.linear;
    if (ws.eq.rows() > 0) stationarity -= ws.eq.transpose() * phase2.eq_multipliers;
    double complementarity = 0.0;
    for (std::size_t w = 0; w < phase2.working.size(); ++w) {
        const auto& side = ws.sides[static_cast<std::size_t>(phase2.working[w])];
        const double mu = phase2.side_multipliers[static_cast<Eigen::Index>(w)];
        stationarity -= mu * side.a;
        complementarity = std::max(complementarity, std::abs(mu * (side.a.dot(result.x) - side.beta)));
        result.constraint_multipliers[side.constraint] += side.upper ? -mu : mu;
        result.active_set.push_back(problem.constraints[static_cast<std::size_t>(side.constraint)].label +
                                    (side.upper ? ":upper" : ":lower"));
    }
    double primal = ws.eq.rows() > 0 ? inf_norm(ws.eq * result.x - ws.eq_rhs) : 0.0;
    for (const auto& side : ws.sides) primal = std::max(primal, side.beta - side.a.dot(result.x));
    result.stationarity_norm = inf_norm(stationarity);
    result.primal_feasibility_norm = std::max(0.0, primal);
    result.complementarity_norm = complementarity;
    std::sort(result.active_set.begin(), result.active_set.end());
    return result;
}

}  // namespace opflab
