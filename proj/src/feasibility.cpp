#include "opflab/feasibility.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "opflab/acopf.hpp"
#include "opflab/injections.hpp"

namespace opflab {

std::string_view to_string(Verdict verdict) {
    return verdict == Verdict::AcInfeasible ? "AcInfeasible" : "Inconclusive";
}

std::string_view to_string(CertificateCase tag) {
    switch (tag) {
        case CertificateCase::SmallAngle: return "SmallAngle";
        case CertificateCase::Case1: return "Case1";
        case CertificateCase::Case2: return "Case2";
    }
    return "SmallAngle";
}

std::string_view to_string(LossMode mode) {
    return mode == LossMode::SlackAbsorbs ? "SlackAbsorbs" : "FictitiousDemand";
}

Verdict verdict_from_string(std::string_view text) {
    if (text == "AcInfeasible") return Verdict::AcInfeasible;
    if (text == "Inconclusive") return Verdict::Inconclusive;
    throw std::invalid_argument("unknown verdict '" + std::string(text) + "'");
}

CertificateCase certificate_case_from_string(std::string_view text) {
    if (text == "SmallAngle") return CertificateCase::SmallAngle;
    if (text == "Case1") return CertificateCase::Case1;
    if (text == "Case2") return CertificateCase::Case2;
    throw std::invalid_argument("unknown certificate case '" + std::string(text) + "'");
}

LossMode loss_mode_from_string(std::string_view text) {
    if (text == "SlackAbsorbs" || text == "slack-absorbs" || text == "slack") return LossMode::SlackAbsorbs;
    if (text == "FictitiousDemand" || text == "fictitious-demand" || text == "fictitious")
        return LossMode::FictitiousDemand;
    throw std::invalid_argument("unknown loss mode '" + std::string(text) + "'");
}

namespace {

std::complex<double> series_admittance(const Branch& br) { return 1.0 / std::complex<double>(br.r, br.x); }

bool separates(const std::vector<CertificateEntry>& certificate) {
    return std::any_of(certificate.begin(), certificate.end(), [](const auto& e) { return e.margin > 0.0; });
}

double inf_norm(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

double balance_double_sum(const Matrix& susceptance, const Vector& theta) {
    return std::abs((susceptance * theta).sum());
}

double dc_balance_identity(const DispatchSolution& dc, const NetworkCase& net) {
    if (dc.kind != DispatchKind::DC) throw std::invalid_argument("dc_balance_identity expects a DC solution");
    return balance_double_sum(build_dc_susceptance(net), dc.theta);
}

Vector flat_voltage_residual(const NetworkCase& net, const AdmittanceMatrix& y, const Matrix& b_dc,
                             const Vector& theta) {
    const Injections inj = compute_injections(y, Vector::Ones(static_cast<Eigen::Index>(net.bus_count())), theta);
    return inj.p - b_dc * theta;
}

Vector branch_frame_residual(const NetworkCase& net, const Vector& theta) {
    Vector d = Vector::Zero(static_cast<Eigen::Index>(net.bus_count()));
    for (const auto& br : net.branches) {
        const auto ys = series_admittance(br);
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        for (const auto& [i, m] : {std::pair{f, t}, std::pair{t, f}}) {
            const double angle = theta[i] - theta[m];
            d[i] += ys.real() * std::cos(angle) + ys.imag() * std::sin(angle) - ys.imag() * angle;
        }
    }
    return d;
}

std::vector<CertificateEntry> sign_certificate(const NetworkCase& net, const Vector& theta) {
    if (theta.size() != static_cast<Eigen::Index>(net.bus_count()))
        throw std::invalid_argument("sign_certificate: angle vector has wrong length");
    struct Incident {
        double g;
        double b;
        double angle;
    };
    std::vector<std::vector<Incident>> incident(net.bus_count());
    for (const auto& br : net.branches) {
        const auto ys = series_admittance(br);
        const double angle = theta[static_cast<Eigen::Index>(br.from)] - theta[static_cast<Eigen::Index>(br.to)];
        if (!(std::abs(angle) < std::numbers::pi / 2))
            throw std::domain_error("angle difference across branch " + std::to_string(br.from + 1) + "-" +
                                    std::to_string(br.to + 1) + " lies outside (-pi/2, pi/2)");
        incident[br.from].push_back({ys.real(), ys.imag(), angle});
        incident[br.to].push_back({ys.real(), ys.imag(), -angle});
    }

    std::vector<CertificateEntry> out;
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        if (incident[i].empty()) continue;
        const bool all_nonneg = std::all_of(incident[i].begin(), incident[i].end(), [](const auto& e) { return e.angle >= 0.0; });
        const bool all_neg = std::all_of(incident[i].begin(), incident[i].end(), [](const auto& e) { return e.angle < 0.0; });
        CertificateEntry entry;
        entry.bus = i;
        entry.case_tag = all_nonneg ? CertificateCase::Case1 : all_neg ? CertificateCase::Case2 : CertificateCase::SmallAngle;
        for (const auto& e : incident[i]) {
            if (e.angle >= 0.0) {
                entry.lhs_value += e.g * std::cos(e.angle);
                entry.rhs_value += e.b * (e.angle - std::sin(e.angle));
            } else {
                entry.lhs_value += -e.g * std::sin(e.angle);
                entry.rhs_value += e.b * (1.0 - std::cos(e.angle));
            }
        }
        entry.margin = entry.lhs_value - entry.rhs_value;
        out.push_back(entry);
    }
    return out;
}

FeasibilityReport check_ed_infeasibility(const NetworkCase& net) {
    const EdResult ed = solve_economic_dispatch(net);
    FeasibilityReport report;
    report.dc_balance_gap = ed.solution.total_gen - ed.solution.total_load;

    PfDispatch dispatch = nominal_dispatch(net);
    dispatch.pg = ed.solution.pg;
    const PfSolution pf = solve_newton_pf(net, dispatch);
    if (!pf.converged) throw SolverError("power flow at the ED dispatch did not converge");

    const AdmittanceMatrix y = build_admittance(net);
    report.dc_point_residual = ac_residual(net, y, pf.v_mag, pf.theta, ed.solution.pg, pf.qg);
    report.max_residual = report.dc_point_residual.max_abs_p();
    report.ac_loss_gap = report.dc_point_residual.p_residual.sum();
    report.estimated_losses = pf.losses_p;
    report.adjusted_total_gen = ed.solution.total_gen;
    report.ac_total_demand = net.total_p_load() + pf.losses_p;
    report.evaluation_theta = pf.theta;
    report.certificate = sign_certificate(net, pf.theta);

    const AcOpfResult ac = solve_acopf(net);
    if (ac.converged) report.ac_opf_loss_gap = ac.solution.total_gen - ac.solution.total_load;

    report.verdict = report.max_residual > kInfeasibilityThreshold && separates(report.certificate)
                         ? Verdict::AcInfeasible
                         : Verdict::Inconclusive;
    return report;
}

FeasibilityReport loss_adjusted_residual(const NetworkCase& net, const DispatchSolution& dc, LossMode mode) {
    if (dc.kind != DispatchKind::DC) throw std::invalid_argument("loss_adjusted_residual expects a DC solution");

    PfDispatch dispatch = nominal_dispatch(net);
    dispatch.pg = dc.pg;
    const PfSolution pf = solve_newton_pf(net, dispatch);
    if (!pf.converged)
        throw SolverError("power flow at the DC dispatch did not converge (" + std::string(to_string(pf.status)) + ")");

    FeasibilityReport report;
    report.loss_mode = mode;
    report.estimated_losses = pf.losses_p;
    report.ac_total_demand = net.total_p_load() + pf.losses_p;
    report.dc_balance_gap = dc.total_gen - dc.total_load;

    Vector pg = dc.pg;
    Vector theta = dc.theta;
    if (mode == LossMode::SlackAbsorbs) {
        const auto slack = net.slack_bus();
        const auto at_slack = net.generators_by_bus()[slack];
        if (at_slack.empty()) throw CaseError("slack bus hosts no generator");
        pg[static_cast<Eigen::Index>(at_slack.front())] += pf.losses_p;
    } else {
        const double load = net.total_p_load();
        const double factor = load > 0.0 ? (load + pf.losses_p) / load : 1.0;
        NetworkCase inflated = net;
        for (auto& bus : inflated.buses) bus.p_load *= factor;
        const DcOpfResult redo = solve_dcopf(inflated);
        pg = redo.solution.pg;
        theta = redo.solution.theta;
    }
    report.adjusted_total_gen = pg.sum();

    const AdmittanceMatrix y = build_admittance(net);
    const Matrix b_dc = build_dc_susceptance(net);
    report.dc_point_residual = evaluate_dc_point(net, y, theta, pg);
    report.dc_point_residual.p_residual = flat_voltage_residual(net, y, b_dc, theta);
    report.max_residual = inf_norm(report.dc_point_residual.p_residual);
    report.evaluation_theta = theta;
    report.certificate = sign_certificate(net, theta);
    report.verdict = report.max_residual > kInfeasibilityThreshold && separates(report.certificate)
                         ? Verdict::AcInfeasible
                         : Verdict::Inconclusive;
    return report;
}

FeasibilityReport check_feasibility(const NetworkCase& net, LossMode mode) {
    const DcOpfResult dc = solve_dcopf(net);
    FeasibilityReport report = loss_adjusted_residual(net, dc.solution, mode);
    const AcOpfResult ac = solve_acopf(net);
    if (ac.converged) {
        report.ac_loss_gap = ac.solution.total_gen - ac.solution.total_load;
        report.ac_opf_loss_gap = report.ac_loss_gap;
    }
    return report;
}

std::vector<double> experiment_load_factors(std::size_t bus_count, double lo, double hi, std::uint64_t seed,
                                            int run_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run_id)};
    std::mt19937_64 rng(seq);
    std::vector<double> factors(bus_count);
    for (auto& f : factors) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        f = lo + (hi - lo) * u;
    }
    return factors;
}

namespace {

GapExperimentRow run_gap_instance(const NetworkCase& net, double lo, double hi, std::uint64_t seed, int run_id) {
    const auto factors = experiment_load_factors(net.bus_count(), lo, hi, seed, run_id);
    const NetworkCase scaled = scale_loads(net, factors);
    GapExperimentRow row;
    row.run_id = run_id;
    row.load_factor_mean = std::accumulate(factors.begin(), factors.end(), 0.0) / static_cast<double>(factors.size());
    row.total_load = scaled.total_p_load();
    try {
        row.dc_total_gen = solve_dcopf(scaled).solution.total_gen;
    } catch (const std::runtime_error&) {
    }
    try {
        const AcOpfResult ac = solve_acopf(scaled);
        row.ac_converged = ac.converged;
        if (ac.converged) row.ac_total_gen = ac.solution.total_gen;
    } catch (const std::runtime_error&) {
    }
    if (row.dc_total_gen && row.ac_total_gen) row.gap = *row.ac_total_gen - *row.dc_total_gen;
    return row;
}

}  // namespace

std::vector<GapExperimentRow> generation_gap_experiment(const NetworkCase& net, int n_runs, double lo, double hi,
                                                        std::uint64_t seed, int jobs) {
    if (n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
    if (!(lo >= 0.0) || !(hi >= lo)) throw std::invalid_argument("load factor range must satisfy 0 <= lo <= hi");
    std::vector<GapExperimentRow> rows(static_cast<std::size_t>(n_runs));
    const int workers = std::clamp(jobs, 1, n_runs);
    if (workers == 1) {
        for (int r = 0; r < n_runs; ++r) rows[static_cast<std::size_t>(r)] = run_gap_instance(net, lo, hi, seed, r);
        return rows;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int r = next++; r < n_runs; r = next++)
                rows[static_cast<std::size_t>(r)] = run_gap_instance(net, lo, hi, seed, r);
        });
    }
    pool.clear();
    return rows;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    const auto n = a.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        for (std::size_t s = 0; s < n;) {
            std::size_t e = s;
            while (e + 1 < n && v[order[e + 1]] == v[order[s]]) ++e;
            const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
            for (std::size_t k = s; k <= e; ++k) r[order[k]] = avg;
            s = e + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double mean = 0.5 * static_cast<double>(n + 1);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

double gap_trend(const std::vector<GapExperimentRow>& rows) {
    std::vector<double> load;
    std::vector<double> gap;
    for (const auto& row : rows) {
        if (!row.gap) continue;
        load.push_back(row.total_load);
        gap.push_back(*row.gap);
    }
    return spearman(load, gap);
}

}  // namespace opflab
