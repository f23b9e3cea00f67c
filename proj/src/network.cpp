#include "opflab/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace opflab {

std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "pq";
}

BusKind bus_kind_from_string(std::string_view text) {
    if (text == "slack") return BusKind::Slack;
    if (text == "pv") return BusKind::PV;
    if (text == "pq") return BusKind::PQ;
    throw CaseError("unknown bus kind '" + std::string(text) + "'");
}

ParseError::ParseError(int line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::size_t NetworkCase::slack_bus() const {
    std::optional<std::size_t> slack;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind != BusKind::Slack) continue;
        if (slack) throw CaseError("case has more than one slack bus");
        slack = i;
    }
    if (!slack) throw CaseError("case has no slack bus");
    return *slack;
}

std::optional<std::size_t> NetworkCase::index_of(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == bus_id) return i;
    }
    return std::nullopt;
}

double NetworkCase::total_p_load() const {
    double total = 0.0;
    for (const auto& bus : buses) total += bus.p_load;
    return total;
}

double NetworkCase::total_q_load() const {
    double total = 0.0;
    for (const auto& bus : buses) total += bus.q_load;
    return total;
}

std::vector<std::vector<std::size_t>> NetworkCase::generators_by_bus() const {
    std::vector<std::vector<std::size_t>> at_bus(buses.size());
    for (std::size_t k = 0; k < generators.size(); ++k) at_bus[generators[k].bus].push_back(k);
    return at_bus;
}

namespace {

std::string bus_label(const NetworkCase& net, std::size_t i) {
    return "bus " + std::to_string(net.buses[i].id);
}

std::string branch_label(const NetworkCase& net, std::size_t k) {
    const auto& br = net.branches[k];
    return "branch " + std::to_string(k + 1) + " (" + std::to_string(net.buses[br.from].id) + "-" +
           std::to_string(net.buses[br.to].id) + ")";
}

bool is_connected(const NetworkCase& net) {
    const std::size_t n = net.bus_count();
    if (n == 0) return false;
    std::vector<std::vector<std::size_t>> adjacent(n);
    for (const auto& br : net.branches) {
        adjacent[br.from].push_back(br.to);
        adjacent[br.to].push_back(br.from);
    }
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
        const auto i = frontier.front();
        frontier.pop();
        for (auto m : adjacent[i]) {
            if (seen[m]) continue;
            seen[m] = true;
            ++reached;
            frontier.push(m);
        }
    }
    return reached == n;
}

}  // namespace

void check_case_structure(const NetworkCase& net) {
    if (net.buses.empty()) throw CaseError("case has no buses");
    if (!(net.base_mva > 0.0)) throw CaseError("base MVA must be positive");
    (void)net.slack_bus();

    std::unordered_set<int> ids;
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        const auto& bus = net.buses[i];
        if (!ids.insert(bus.id).second) throw CaseError("duplicate " + bus_label(net, i));
        if (!(bus.v_min > 0.0) || bus.v_min > bus.v_max)
            throw CaseError(bus_label(net, i) + ": voltage bounds must satisfy 0 < v_min <= v_max");
    }

    const std::size_t n = net.bus_count();
    for (std::size_t k = 0; k < net.branch_count(); ++k) {
        const auto& br = net.branches[k];
        if (br.from >= n || br.to >= n)
            throw CaseError("branch " + std::to_string(k + 1) + " references a missing bus");
        if (br.from == br.to) throw CaseError(branch_label(net, k) + " connects a bus to itself");
        if (!(br.x > 0.0))
            throw CaseError(branch_label(net, k) +
                            ": nonpositive reactance violates Assumption 4 (positive line reactance)");
        if (!(br.tap > 0.0)) throw CaseError(branch_label(net, k) + ": tap ratio must be positive");
        if (br.flow_limit && !(*br.flow_limit > 0.0))
            throw CaseError(branch_label(net, k) + ": flow limit must be positive");
    }

    for (std::size_t k = 0; k < net.generator_count(); ++k) {
        const auto& gen = net.generators[k];
        const auto label = "generator " + std::to_string(k + 1);
        if (gen.bus >= n) throw CaseError(label + " references a missing bus");
        if (gen.p_min > gen.p_max) throw CaseError(label + ": p_min exceeds p_max");
        if (gen.q_min > gen.q_max) throw CaseError(label + ": q_min exceeds q_max");
        if (gen.cost_a < 0.0) throw CaseError(label + ": quadratic cost coefficient must be >= 0");
    }

    if (n > 1) {
        if (net.branches.empty()) throw CaseError("multi-bus case has no branches");
        if (!is_connected(net)) throw CaseError("bus graph is not connected");
    }
}

std::vector<AssumptionCheck> validate_assumptions(const NetworkCase& net) {
    std::vector<AssumptionCheck> checks;

    checks.push_back({1, "constant PQ loads", true,
                      "loads are fixed (P, Q) demands; the data model admits no other load type"});

    {
        AssumptionCheck check{2, "power flows on at least one line", !net.branches.empty(), ""};
        check.detail = std::to_string(net.branch_count()) + " branch(es)";
        checks.push_back(check);
    }

    {
        AssumptionCheck check{3, "symmetric admittance matrix", false, ""};
        const bool defined = std::all_of(net.branches.begin(), net.branches.end(), [](const Branch& br) {
            return br.r * br.r + br.x * br.x > 0.0 && br.tap > 0.0;
        });
        if (!defined) {
            check.detail = "admittance undefined (zero-impedance branch or nonpositive tap)";
        } else {
            const auto y = build_admittance(net);
            const double asym = std::max((y.g - y.g.transpose()).cwiseAbs().maxCoeff(),
                                         (y.b - y.b.transpose()).cwiseAbs().maxCoeff());
            check.passed = asym < 1e-12;
            std::ostringstream out;
            out << "max |Y - Y^T| = " << asym;
            const bool tapped = std::any_of(net.branches.begin(), net.branches.end(),
                                            [](const Branch& br) { return br.tap != 1.0; });
            if (tapped) out << " (off-nominal taps present)";
            check.detail = out.str();
        }
        checks.push_back(check);
    }

    {
        AssumptionCheck check{4, "positive line resistance and reactance", true, "all branches have r > 0 and x > 0"};
        for (std::size_t k = 0; k < net.branch_count(); ++k) {
            const auto& br = net.branches[k];
            if (br.r > 0.0 && br.x > 0.0) continue;
            check.passed = false;
            std::ostringstream out;
            out << branch_label(net, k) << " has r = " << br.r << ", x = " << br.x;
            check.detail = out.str();
            break;
        }
        checks.push_back(check);
    }

    return checks;
}

NetworkCase scale_loads(const NetworkCase& net, std::span<const double> factors) {
    if (factors.size() != net.bus_count())
        throw std::invalid_argument("scale_loads: expected " + std::to_string(net.bus_count()) +
                                    " factors, got " + std::to_string(factors.size()));
    NetworkCase scaled = net;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (!(factors[i] >= 0.0)) throw std::invalid_argument("scale_loads: factors must be >= 0");
        scaled.buses[i].p_load *= factors[i];
        scaled.buses[i].q_load *= factors[i];
    }
    return scaled;
}

}  // namespace opflab
