#pragma once

// Polar-form nodal power injections
//   P_i = |v_i| sum_m |v_m| (G_im cos t_im + B_im sin t_im)
//   Q_i = |v_i| sum_m |v_m| (G_im sin t_im - B_im cos t_im),   t_im = theta_i - theta_m
// and their first and second derivatives. Shared by the power flow, the
// AC OPF and the residual evaluators.

#include "opflab/network.hpp"

namespace opflab {

struct Injections {
    Vector p;
    Vector q;
};

Injections compute_injections(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta);

/// Dense n x n blocks with respect to every bus angle and magnitude.
struct InjectionJacobian {
    Matrix dp_dtheta;
    Matrix dp_dv;
    Matrix dq_dtheta;
    Matrix dq_dv;
};

InjectionJacobian injection_jacobian(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta);

/// Hessian of sum_i (wp_i P_i + wq_i Q_i) over the stacked variables
/// (theta_0..theta_{n-1}, v_0..v_{n-1}); a 2n x 2n symmetric matrix.
Matrix weighted_injection_hessian(const AdmittanceMatrix& y, const Vector& v_mag, const Vector& theta,
                                  const Vector& wp, const Vector& wq);

}  // namespace opflab
