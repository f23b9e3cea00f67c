#pragma once

// Network data model shared by every solver. All electrical quantities are
// per-unit on NetworkCase::base_mva; angles are radians; buses are indexed
// 0..n-1 internally and keep their case-file number in Bus::id.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace opflab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);
BusKind bus_kind_from_string(std::string_view text);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;
    double q_load = 0.0;
    double g_shunt = 0.0;
    double b_shunt = 0.0;
    double v_min = 0.9;
    double v_max = 1.1;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    std::size_t from = 0;
    std::size_t to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_shunt = 0.0;  ///< total line charging
    double tap = 1.0;
    std::optional<double> flow_limit;

    bool operator==(const Branch&) const = default;
};

struct Generator {
    std::size_t bus = 0;
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    /// cost(p) = cost_a p^2 + cost_b p + cost_c with p in per-unit.
    double cost_a = 0.0;
    double cost_b = 0.0;
    double cost_c = 0.0;
    /// Operating point stored in the case file (used by power flow defaults).
    double pg = 0.0;
    double qg = 0.0;
    double v_set = 1.0;

    [[nodiscard]] double cost(double p) const { return (cost_a * p + cost_b) * p + cost_c; }
    [[nodiscard]] double marginal_cost(double p) const { return 2.0 * cost_a * p + cost_b; }

    bool operator==(const Generator&) const = default;
};

struct NetworkCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    [[nodiscard]] std::size_t bus_count() const { return buses.size(); }
    [[nodiscard]] std::size_t branch_count() const { return branches.size(); }
    [[nodiscard]] std::size_t generator_count() const { return generators.size(); }

    /// Index of the unique slack bus. Throws CaseError if there is not exactly one.
    [[nodiscard]] std::size_t slack_bus() const;
    [[nodiscard]] std::optional<std::size_t> index_of(int bus_id) const;

    [[nodiscard]] double total_p_load() const;
    [[nodiscard]] double total_q_load() const;

    /// generators_by_bus()[i] lists the generator indices connected at bus i.
    [[nodiscard]] std::vector<std::vector<std::size_t>> generators_by_bus() const;

    bool operator==(const NetworkCase&) const = default;
};

/// A case violates a structural invariant (bad reference, no slack, x <= 0, ...).
class CaseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Case text could not be read. line() is 1-based.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& message);
    [[nodiscard]] int line() const { return line_; }

private:
    int line_;
};

/// Parse MATPOWER-style case text (bus, gen, branch and gencost tables).
/// Quantities are converted to per-unit and the result is checked with
/// check_case_structure().
NetworkCase parse_case(std::string_view text);
NetworkCase load_case_file(const std::string& path);

/// Throws CaseError naming the first violated structural invariant. Resistance
/// sign and branch presence are left to validate_assumptions(), which reports
/// them as data; a nonpositive reactance is rejected here because the DC
/// susceptance is undefined for it.
void check_case_structure(const NetworkCase& net);

struct AdmittanceMatrix {
    Matrix g;
    Matrix b;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(g.rows()); }
};

/// Standard bus admittance assembly Y = G + jB including line charging,
/// off-nominal taps and bus shunts.
AdmittanceMatrix build_admittance(const NetworkCase& net);

/// DC susceptance matrix: off-diagonal -1/x per branch (parallel branches
/// summed), diagonal equal to minus the off-diagonal row sum.
Matrix build_dc_susceptance(const NetworkCase& net);

struct AssumptionCheck {
    int number = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Checks the four modelling preconditions of the infeasibility argument:
/// 1 constant-PQ loads, 2 at least one branch, 3 symmetric admittance,
/// 4 positive r and x on every branch.
std::vector<AssumptionCheck> validate_assumptions(const NetworkCase& net);

/// Returns a copy with p_load and q_load of bus i multiplied by factors[i].
NetworkCase scale_loads(const NetworkCase& net, std::span<const double> factors);

}  // namespace opflab
