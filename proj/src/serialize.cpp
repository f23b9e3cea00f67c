#include "opflab/serialize.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace opflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Json number_or_null(double value) { return std::isfinite(value) ? Json(value) : Json(nullptr); }

double number_or(const Json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

Json optional_number(const std::optional<double>& value) { return value ? Json(*value) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

Json array(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
    return a;
}

Vector vector_from(const Json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_or(j[i], std::nan(""));
    return v;
}

std::size_t bus_index(const NetworkCase& net, int id) {
    const auto idx = net.index_of(id);
    if (!idx) throw CaseError("unknown bus id " + std::to_string(id));
    return *idx;
}

int bus_id(const NetworkCase& net, std::size_t index) { return net.buses.at(index).id; }

double parse_number(const std::string& text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        if (text == "inf") return kInf;
        if (text == "-inf") return -kInf;
        throw std::invalid_argument("not a number: '" + text + "'");
    }
    return value;
}

std::optional<double> parse_optional(const std::string& text) {
    if (text.empty()) return std::nullopt;
    return parse_number(text);
}

std::string optional_cell(const std::optional<double>& value) { return value ? format_number(*value) : std::string(); }

void write_preamble(std::ostream& out, const CsvPreamble& preamble) {
    for (const auto& [key, value] : preamble) out << "# " << key << '=' << value << '\n';
}

void expect_header(const CsvTable& table, const char* header) {
    std::string joined;
    for (std::size_t i = 0; i < table.header.size(); ++i) joined += (i ? "," : "") + table.header[i];
    if (joined != header) throw ParseError(static_cast<int>(table.preamble.size()) + 1, "unexpected CSV header '" + joined + "'");
}

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return {buf, res.ptr};
}

Json to_json(const NetworkCase& net) {
    Json j;
    j["base_mva"] = net.base_mva;
    j["buses"] = Json::array();
    for (const auto& bus : net.buses) {
        j["buses"].push_back({{"id", bus.id},
                              {"kind", to_string(bus.kind)},
                              {"p_load", bus.p_load},
                              {"q_load", bus.q_load},
                              {"g_shunt", bus.g_shunt},
                              {"b_shunt", bus.b_shunt},
                              {"v_min", bus.v_min},
                              {"v_max", bus.v_max}});
    }
    j["branches"] = Json::array();
    for (const auto& br : net.branches) {
        j["branches"].push_back({{"from", bus_id(net, br.from)},
                                 {"to", bus_id(net, br.to)},
                                 {"r", br.r},
                                 {"x", br.x},
                                 {"b_shunt", br.b_shunt},
                                 {"tap", br.tap},
                                 {"flow_limit", optional_number(br.flow_limit)}});
    }
    j["generators"] = Json::array();
    for (const auto& gen : net.generators) {
        j["generators"].push_back({{"bus", bus_id(net, gen.bus)},
                                   {"p_min", number_or_null(gen.p_min)},
                                   {"p_max", number_or_null(gen.p_max)},
                                   {"q_min", number_or_null(gen.q_min)},
                                   {"q_max", number_or_null(gen.q_max)},
                                   {"cost_a", gen.cost_a},
                                   {"cost_b", gen.cost_b},
                                   {"cost_c", gen.cost_c},
                                   {"pg", gen.pg},
                                   {"qg", gen.qg},
                                   {"v_set", gen.v_set}});
    }
    return j;
}

NetworkCase case_from_json(const Json& j) {
    NetworkCase net;
    net.base_mva = j.at("base_mva").get<double>();
    for (const auto& b : j.at("buses")) {
        Bus bus;
        bus.id = b.at("id").get<int>();
        bus.kind = bus_kind_from_string(b.at("kind").get<std::string>());
        bus.p_load = b.at("p_load").get<double>();
        bus.q_load = b.at("q_load").get<double>();
        bus.g_shunt = b.at("g_shunt").get<double>();
        bus.b_shunt = b.at("b_shunt").get<double>();
        bus.v_min = b.at("v_min").get<double>();
        bus.v_max = b.at("v_max").get<double>();
        net.buses.push_back(bus);
    }
    for (const auto& b : j.at("branches")) {
        Branch br;
        br.from = bus_index(net, b.at("from").get<int>());
        br.to = bus_index(net, b.at("to").get<int>());
        br.r = b.at("r").get<double>();
        br.x = b.at("x").get<double>();
        br.b_shunt = b.at("b_shunt").get<double>();
        br.tap = b.at("tap").get<double>();
        br.flow_limit = optional_from(b, "flow_limit");
        net.branches.push_back(br);
    }
    for (const auto& g : j.at("generators")) {
        Generator gen;
        gen.bus = bus_index(net, g.at("bus").get<int>());
        gen.p_min = number_or(g.at("p_min"), -kInf);
        gen.p_max = number_or(g.at("p_max"), kInf);
        gen.q_min = number_or(g.at("q_min"), -kInf);
        gen.q_max = number_or(g.at("q_max"), kInf);
        gen.cost_a = g.at("cost_a").get<double>();
        gen.cost_b = g.at("cost_b").get<double>();
        gen.cost_c = g.at("cost_c").get<double>();
        gen.pg = g.at("pg").get<double>();
        gen.qg = g.at("qg").get<double>();
        gen.v_set = g.at("v_set").get<double>();
        net.generators.push_back(gen);
    }
    check_case_structure(net);
    return net;
}

Json to_json(const DispatchSolution& s) {
    Json j;
    j["kind"] = to_string(s.kind);
    j["objective"] = s.objective;
    j["total_gen"] = s.total_gen;
    j["total_load"] = s.total_load;
    j["pg"] = array(s.pg);
    j["qg"] = array(s.qg);
    j["v_mag"] = array(s.v_mag);
    j["theta"] = array(s.theta);
    j["branch_flows"] = array(s.branch_flows);
    return j;
}

DispatchSolution dispatch_from_json(const Json& j) {
    DispatchSolution s;
    s.kind = dispatch_kind_from_string(j.at("kind").get<std::string>());
    s.objective = j.at("objective").get<double>();
    s.total_gen = j.at("total_gen").get<double>();
    s.total_load = j.at("total_load").get<double>();
    s.pg = vector_from(j.at("pg"));
    s.qg = vector_from(j.at("qg"));
    s.v_mag = vector_from(j.at("v_mag"));
    s.theta = vector_from(j.at("theta"));
    s.branch_flows = vector_from(j.at("branch_flows"));
    return s;
}

Json to_json(const QpDiagnostics& d) {
    return {{"kkt_stationarity_norm", d.kkt_stationarity_norm},
            {"primal_feasibility_norm", d.primal_feasibility_norm},
            {"complementarity_norm", d.complementarity_norm},
            {"iterations", d.iterations},
            {"active_set", d.active_set}};
}

QpDiagnostics diagnostics_from_json(const Json& j) {
    QpDiagnostics d;
    d.kkt_stationarity_norm = j.at("kkt_stationarity_norm").get<double>();
    d.primal_feasibility_norm = j.at("primal_feasibility_norm").get<double>();
    d.complementarity_norm = j.at("complementarity_norm").get<double>();
    d.iterations = j.at("iterations").get<int>();
    d.active_set = j.at("active_set").get<std::vector<std::string>>();
    return d;
}

Json to_json(const EdResult& result) {
    Json j = to_json(result.solution);
    j["lambda"] = result.lambda;
    j["diagnostics"] = to_json(result.diagnostics);
    return j;
}

Json to_json(const DcOpfResult& result) {
    Json j = to_json(result.solution);
    j["diagnostics"] = to_json(result.diagnostics);
    return j;
}

Json to_json(const PfSolution& pf, const NetworkCase& net) {
    Json limited = Json::array();
    for (const auto i : pf.q_limited_buses) limited.push_back(bus_id(net, i));
    return {{"converged", pf.converged},
            {"status", to_string(pf.status)},
            {"iterations", pf.iterations},
            {"final_residual_norm", number_or_null(pf.final_residual_norm)},
            {"slack_p", pf.slack_p},
            {"slack_q", pf.slack_q},
            {"losses_p", pf.losses_p},
            {"v_mag", array(pf.v_mag)},
            {"theta", array(pf.theta)},
            {"pg", array(pf.pg)},
            {"qg", array(pf.qg)},
            {"q_limited_buses", limited}};
}

PfSolution pf_from_json(const Json& j, const NetworkCase& net) {
    PfSolution pf;
    pf.converged = j.at("converged").get<bool>();
    const auto status = j.at("status").get<std::string>();
    for (const auto s : {PfStatus::Converged, PfStatus::MaxIterations, PfStatus::SingularJacobian})
        if (to_string(s) == status) pf.status = s;
    pf.iterations = j.at("iterations").get<int>();
    pf.final_residual_norm = number_or(j.at("final_residual_norm"), std::nan(""));
    pf.slack_p = j.at("slack_p").get<double>();
    pf.slack_q = j.at("slack_q").get<double>();
    pf.losses_p = j.at("losses_p").get<double>();
    pf.v_mag = vector_from(j.at("v_mag"));
    pf.theta = vector_from(j.at("theta"));
    pf.pg = vector_from(j.at("pg"));
    pf.qg = vector_from(j.at("qg"));
    for (const auto& id : j.at("q_limited_buses")) pf.q_limited_buses.push_back(bus_index(net, id.get<int>()));
    return pf;
}

Json to_json(const ResidualVector& residual, const NetworkCase& net) {
    Json j = Json::array();
    for (Eigen::Index i = 0; i < residual.p_residual.size(); ++i) {
        j.push_back({{"bus_id", bus_id(net, static_cast<std::size_t>(i))},
                     {"p_residual", residual.p_residual[i]},
                     {"q_residual", residual.q_residual[i]}});
    }
    return j;
}

ResidualVector residual_from_json(const Json& j, const NetworkCase& net) {
    ResidualVector r{Vector::Zero(static_cast<Eigen::Index>(net.bus_count())),
                     Vector::Zero(static_cast<Eigen::Index>(net.bus_count()))};
    for (const auto& row : j) {
        const auto i = static_cast<Eigen::Index>(bus_index(net, row.at("bus_id").get<int>()));
        r.p_residual[i] = row.at("p_residual").get<double>();
        r.q_residual[i] = row.at("q_residual").get<double>();
    }
    return r;
}

Json to_json(const AcOpfResult& result) {
    return {{"converged", result.converged},
            {"status", result.status},
            {"iterations", result.iterations},
            {"kkt_norm", number_or_null(result.kkt_norm)},
            {"feasibility_norm", number_or_null(result.feasibility_norm)},
            {"solution", to_json(result.solution)}};
}

AcOpfResult acopf_from_json(const Json& j) {
    AcOpfResult r;
    r.converged = j.at("converged").get<bool>();
    r.status = j.at("status").get<std::string>();
    r.iterations = j.at("iterations").get<int>();
    r.kkt_norm = number_or(j.at("kkt_norm"), kInf);
    r.feasibility_norm = number_or(j.at("feasibility_norm"), kInf);
    r.solution = dispatch_from_json(j.at("solution"));
    return r;
}

Json to_json(const FeasibilityReport& report, const NetworkCase& net) {
    Json certificate = Json::object();
    for (const auto& e : report.certificate) {
        certificate[std::to_string(bus_id(net, e.bus))] = {{"case_tag", to_string(e.case_tag)},
                                                           {"lhs_value", e.lhs_value},
                                                           {"rhs_value", e.rhs_value},
                                                           {"margin", e.margin}};
    }
    return {{"verdict", to_string(report.verdict)},
            {"dc_balance_gap", report.dc_balance_gap},
            {"ac_loss_gap", optional_number(report.ac_loss_gap)},
            {"ac_opf_loss_gap", optional_number(report.ac_opf_loss_gap)},
            {"loss_mode", report.loss_mode ? Json(to_string(*report.loss_mode)) : Json(nullptr)},
            {"estimated_losses", report.estimated_losses},
            {"adjusted_total_gen", report.adjusted_total_gen},
            {"ac_total_demand", report.ac_total_demand},
            {"max_residual", report.max_residual},
            {"dc_point_residual", to_json(report.dc_point_residual, net)},
            {"theta", array(report.evaluation_theta)},
            {"certificate", certificate}};
}

FeasibilityReport report_from_json(const Json& j, const NetworkCase& net) {
    FeasibilityReport r;
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.dc_balance_gap = j.at("dc_balance_gap").get<double>();
    r.ac_loss_gap = optional_from(j, "ac_loss_gap");
    r.ac_opf_loss_gap = optional_from(j, "ac_opf_loss_gap");
    if (!j.at("loss_mode").is_null()) r.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
    r.estimated_losses = j.at("estimated_losses").get<double>();
    r.adjusted_total_gen = j.at("adjusted_total_gen").get<double>();
    r.ac_total_demand = j.at("ac_total_demand").get<double>();
    r.max_residual = j.at("max_residual").get<double>();
    r.dc_point_residual = residual_from_json(j.at("dc_point_residual"), net);
    r.evaluation_theta = vector_from(j.at("theta"));
    for (const auto& [key, value] : j.at("certificate").items()) {
        CertificateEntry e;
        e.bus = bus_index(net, std::stoi(key));
        e.case_tag = certificate_case_from_string(value.at("case_tag").get<std::string>());
        e.lhs_value = value.at("lhs_value").get<double>();
        e.rhs_value = value.at("rhs_value").get<double>();
        e.margin = value.at("margin").get<double>();
        r.certificate.push_back(e);
    }
    return r;
}

Json to_json(const std::vector<AssumptionCheck>& checks) {
    Json j = Json::array();
    for (const auto& c : checks)
        j.push_back({{"number", c.number}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return j;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    int line_no = 0;
    auto split = [](const std::string& text) {
        std::vector<std::string> cells;
        std::stringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!text.empty() && text.back() == ',') cells.emplace_back();
        return cells;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.starts_with("# ")) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError(line_no, "malformed CSV comment");
            table.preamble.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
            continue;
        }
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
        } else {
            if (cells.size() != table.header.size()) throw ParseError(line_no, "row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(table.header.size()));
            table.rows.push_back(std::move(cells));
        }
    }
    if (table.header.empty()) throw ParseError(line_no, "CSV has no header");
    return table;
}

void write_experiment_csv(std::ostream& out, const std::vector<GapExperimentRow>& rows, const CsvPreamble& preamble) {
    write_preamble(out, preamble);
    out << kExperimentHeader << '\n';
    for (const auto& r : rows) {
        out << r.run_id << ',' << format_number(r.load_factor_mean) << ',' << format_number(r.total_load) << ','
            << optional_cell(r.dc_total_gen) << ',' << optional_cell(r.ac_total_gen) << ',' << optional_cell(r.gap) << ','
            << (r.ac_converged ? "true" : "false") << '\n';
    }
}

std::vector<GapExperimentRow> read_experiment_csv(std::istream& in) {
    const CsvTable table = read_csv(in);
    expect_header(table, kExperimentHeader);
    std::vector<GapExperimentRow> rows;
    for (const auto& c : table.rows) {
        GapExperimentRow r;
        r.run_id = std::stoi(c[0]);
        r.load_factor_mean = parse_number(c[1]);
        r.total_load = parse_number(c[2]);
        r.dc_total_gen = parse_optional(c[3]);
        r.ac_total_gen = parse_optional(c[4]);
        r.gap = parse_optional(c[5]);
        if (c[6] != "true" && c[6] != "false") throw std::invalid_argument("ac_converged must be true or false");
        r.ac_converged = c[6] == "true";
        rows.push_back(r);
    }
    return rows;
}

void write_residual_csv(std::ostream& out, const ResidualVector& residual, const NetworkCase& net,
                        const CsvPreamble& preamble) {
    write_preamble(out, preamble);
    out << kResidualHeader << '\n';
    for (Eigen::Index i = 0; i < residual.p_residual.size(); ++i) {
        out << bus_id(net, static_cast<std::size_t>(i)) << ',' << format_number(residual.p_residual[i]) << ','
            << format_number(residual.q_residual[i]) << '\n';
    }
}

ResidualVector read_residual_csv(std::istream& in, const NetworkCase& net) {
    const CsvTable table = read_csv(in);
    expect_header(table, kResidualHeader);
    ResidualVector r{Vector::Zero(static_cast<Eigen::Index>(net.bus_count())),
                     Vector::Zero(static_cast<Eigen::Index>(net.bus_count()))};
    for (const auto& c : table.rows) {
        const auto i = static_cast<Eigen::Index>(bus_index(net, std::stoi(c[0])));
        r.p_residual[i] = parse_number(c[1]);
        r.q_residual[i] = parse_number(c[2]);
    }
    return r;
}

void write_trace_csv(std::ostream& out, const std::vector<AcOpfTraceRow>& trace, const CsvPreamble& preamble) {
    write_preamble(out, preamble);
    out << kTraceHeader << '\n';
    for (const auto& t : trace) {
        out << t.iteration << ',' << format_number(t.barrier) << ',' << format_number(t.kkt_norm) << ','
            << format_number(t.feas_norm) << ',' << format_number(t.objective) << '\n';
    }
}

std::vector<AcOpfTraceRow> read_trace_csv(std::istream& in) {
    const CsvTable table = read_csv(in);
    expect_header(table, kTraceHeader);
    std::vector<AcOpfTraceRow> trace;
    for (const auto& c : table.rows)
        trace.push_back({std::stoi(c[0]), parse_number(c[1]), parse_number(c[2]), parse_number(c[3]), parse_number(c[4])});
    return trace;
}

}  // namespace opflab
