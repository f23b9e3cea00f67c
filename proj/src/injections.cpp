#include "opflab/injections.hpp"

#include <cmath>

namespace opflab {

namespace {

// One off-diagonal term V_i V_m h(t_im) of P_i and of Q_i, with h and its
// first two derivatives in t_im.
struct PairTerm {
    double hp, dhp, d2hp;
    double hq, dhq, d2hq;
};

PairTerm pair_term(double g, double b, double t) {
    const double c = std::cos(t);
    const double s = std::sin(t);
    const double hp = g * c + b * s;
    const double hq = g * s - b * c;
    return {hp, -g * s + b * c, -hp, hq, hp, -hq};
}

}  // namespace

Injections compute_injections(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta) {
    const auto n = v_mag.size();
    Injections out{Vector::Zero(n), Vector::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = v_mag[i] * v_mag[i] * y.g(i, i);
        double q = -v_mag[i] * v_mag[i] * y.b(i, i);
        for (Eigen::Index m = 0; m < n; ++m) {
            if (m == i || (y.g(i, m) == 0.0 && y.b(i, m) == 0.0)) continue;
            const auto term = pair_term(y.g(i, m), y.b(i, m), theta[i] - theta[m]);
            p += v_mag[i] * v_mag[m] * term.hp;
            q += v_mag[i] * v_mag[m] * term.hq;
        }
        out.p[i] = p;
        out.q[i] = q;
    }
    return out;
}

InjectionJacobian injection_jacobian(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta) {
    const auto n = v_mag.size();
    InjectionJacobian jac{Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        jac.dp_dv(i, i) += 2.0 * v_mag[i] * y.g(i, i);
        jac.dq_dv(i, i) -= 2.0 * v_mag[i] * y.b(i, i);
        for (Eigen::Index m = 0; m < n; ++m) {
            if (m == i || (y.g(i, m) == 0.0 && y.b(i, m) == 0.0)) continue;
            const auto term = pair_term(y.g(i, m), y.b(i, m), theta[i] - theta[m]);
            const double vv = v_mag[i] * v_mag[m];

            jac.dp_dtheta(i, i) += vv * term.dhp;
            jac.dp_dtheta(i, m) -= vv * term.dhp;
            jac.dp_dv(i, i) += v_mag[m] * term.hp;
            jac.dp_dv(i, m) += v_mag[i] * term.hp;

            jac.dq_dtheta(i, i) += vv * term.dhq;
            jac.dq_dtheta(i, m) -= vv * term.dhq;
            jac.dq_dv(i, i) += v_mag[m] * term.hq;
            jac.dq_dv(i, m) += v_mag[i] * term.hq;
        }
    }
    return jac;
}

Matrix weighted_injection_hessian(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta,
                                  const Vector& wp, const Vector& wq) {
    const auto n = v_mag.size();
    Matrix h = Matrix::Zero(2 * n, 2 * n);
    auto add_sym = [&h](Eigen::Index r, Eigen::Index c, double value) {
        h(r, c) += value;
        if (r != c) h(c, r) += value;
    };

    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index vi = n + i;
        add_sym(vi, vi, 2.0 * (wp[i] * y.g(i, i) - wq[i] * y.b(i, i)));
        for (Eigen::Index m = 0; m < n; ++m) {
            if (m == i || (y.g(i, m) == 0.0 && y.b(i, m) == 0.0)) continue;
            const auto term = pair_term(y.g(i, m), y.b(i, m), theta[i] - theta[m]);
            const Eigen::Index vm = n + m;
            const double h0 = wp[i] * term.hp + wq[i] * term.hq;
            const double h1 = wp[i] * term.dhp + wq[i] * term.dhq;
            const double h2 = wp[i] * term.d2hp + wq[i] * term.d2hq;
            const double vv = v_mag[i] * v_mag[m];

            add_sym(i, i, vv * h2);
            add_sym(m, m, vv * h2);
            add_sym(i, m, -vv * h2);

            add_sym(vi, vm, h0);

            add_sym(vi, i, v_mag[m] * h1);
            add_sym(vi, m, -v_mag[m] * h1);
            add_sym(vm, i, v_mag[i] * h1);
            add_sym(vm, m, -v_mag[i] * h1);
        }
    }
    return h;
}

}  // namespace opflab
