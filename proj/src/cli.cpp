#include "opflab/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "opflab/acopf.hpp"
#include "opflab/dispatch.hpp"
#include "opflab/serialize.hpp"

namespace opflab {

namespace {

constexpr std::array<std::pair<Command, std::string_view>, 7> kCommandNames{{
    {Command::SolveEd, "solve-ed"},
    {Command::SolveDc, "solve-dc"},
    {Command::SolveAc, "solve-ac"},
    {Command::PowerFlow, "power-flow"},
    {Command::CheckFeasibility, "check-feasibility"},
    {Command::GapExperiment, "gap-experiment"},
    {Command::Validate, "validate"},
}};

Json config_json(const RunConfig& c) {
    return {{"command", to_string(c.command)},
            {"case", c.case_path},
            {"seed", c.seed},
            {"runs", c.n_runs},
            {"lo", c.factor_lo},
            {"hi", c.factor_hi},
            {"jobs", c.jobs},
            {"format", to_string(c.resolved_format())},
            {"loss_mode", to_string(c.loss_mode)},
            {"trace", c.trace}};
}

CsvPreamble config_preamble(const RunConfig& c) {
    CsvPreamble p;
    const Json config = config_json(c);
    for (const auto& [key, value] : config.items())
        p.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
    return p;
}

struct Artifact {
    std::string text;
    int status = kExitOk;
};

Artifact json_artifact(const RunConfig& c, Json result, int status = kExitOk) {
    Json doc;
    doc["config"] = config_json(c);
    doc["result"] = std::move(result);
    return {doc.dump(2) + "\n", status};
}

void require_json(const RunConfig& c) {
    if (c.resolved_format() != OutputFormat::Json)
        throw std::invalid_argument(std::string(to_string(c.command)) + " supports only --format json");
}

Artifact solve_ed(const RunConfig& c, const NetworkCase& net) {
    require_json(c);
    return json_artifact(c, to_json(solve_economic_dispatch(net)));
}

Artifact solve_dc(const RunConfig& c, const NetworkCase& net) {
    require_json(c);
    return json_artifact(c, to_json(solve_dcopf(net)));
}

Artifact solve_ac(const RunConfig& c, const NetworkCase& net) {
    const AcOpfResult result = solve_acopf(net);
    const int status = result.converged ? kExitOk : kExitSolverFailure;
    if (c.trace || c.resolved_format() == OutputFormat::Csv) {
        std::ostringstream os;
        write_trace_csv(os, result.trace, config_preamble(c));
        return {os.str(), status};
    }
    Json j = to_json(result);
    j["verification"] = Json::array();
    for (const auto& check : verify_acopf(result, net).checks) {
        j["verification"].push_back(
            {{"name", check.name}, {"value", check.value}, {"tolerance", check.tolerance}, {"passed", check.passed}});
    }
    return json_artifact(c, std::move(j), status);
}

Artifact power_flow(const RunConfig& c, const NetworkCase& net) {
    const PfSolution pf = solve_newton_pf(net, nominal_dispatch(net));
    const int status = pf.converged ? kExitOk : kExitSolverFailure;
    const ResidualVector residual = ac_residual(net, build_admittance(net), pf.v_mag, pf.theta, pf.pg, pf.qg);
    if (c.resolved_format() == OutputFormat::Csv) {
        std::ostringstream os;
        write_residual_csv(os, residual, net, config_preamble(c));
        return {os.str(), status};
    }
    Json j = to_json(pf, net);
    j["residual"] = to_json(residual, net);
    return json_artifact(c, std::move(j), status);
}

Artifact check(const RunConfig& c, const NetworkCase& net) {
    const FeasibilityReport report = check_feasibility(net, c.loss_mode);
    if (c.resolved_format() == OutputFormat::Csv) {
        std::ostringstream os;
        auto preamble = config_preamble(c);
        preamble.emplace_back("verdict", std::string(to_string(report.verdict)));
        write_residual_csv(os, report.dc_point_residual, net, preamble);
        return {os.str()};
    }
    return json_artifact(c, to_json(report, net));
}

Artifact gap_experiment(const RunConfig& c, const NetworkCase& net) {
    const auto rows = generation_gap_experiment(net, c.n_runs, c.factor_lo, c.factor_hi, c.seed, c.jobs);
    if (c.resolved_format() == OutputFormat::Csv) {
        std::ostringstream os;
        write_experiment_csv(os, rows, config_preamble(c));
        return {os.str()};
    }
    Json list = Json::array();
    int converged = 0;
    for (const auto& r : rows) {
        converged += r.ac_converged ? 1 : 0;
        list.push_back({{"run_id", r.run_id},
                        {"load_factor_mean", r.load_factor_mean},
                        {"total_load", r.total_load},
                        {"dc_total_gen", r.dc_total_gen ? Json(*r.dc_total_gen) : Json(nullptr)},
                        {"ac_total_gen", r.ac_total_gen ? Json(*r.ac_total_gen) : Json(nullptr)},
                        {"gap", r.gap ? Json(*r.gap) : Json(nullptr)},
                        {"ac_converged", r.ac_converged}});
    }
    const double rho = gap_trend(rows);
    Json result{{"converged_runs", converged},
                {"spearman_load_gap", std::isfinite(rho) ? Json(rho) : Json(nullptr)},
                {"rows", list}};
    return json_artifact(c, std::move(result));
}

Artifact validate(const RunConfig& c, const NetworkCase& net) {
    require_json(c);
    const auto checks = validate_assumptions(net);
    const bool passed = std::all_of(checks.begin(), checks.end(), [](const auto& a) { return a.passed; });
    return json_artifact(c, {{"passed", passed}, {"checks", to_json(checks)}}, passed ? kExitOk : kExitInputError);
}

Artifact dispatch(const RunConfig& c, const NetworkCase& net) {
    switch (c.command) {
        case Command::SolveEd: return solve_ed(c, net);
        case Command::SolveDc: return solve_dc(c, net);
        case Command::SolveAc: return solve_ac(c, net);
        case Command::PowerFlow: return power_flow(c, net);
        case Command::CheckFeasibility: return check(c, net);
        case Command::GapExperiment: return gap_experiment(c, net);
        case Command::Validate: return validate(c, net);
    }
    throw std::logic_error("unhandled command");
}

int emit(const RunConfig& c, const std::string& text, std::ostream& out, std::ostream& err) {
    if (!c.output_path) {
        out << text;
        return kExitOk;
    }
    std::ofstream file(*c.output_path, std::ios::binary);
    if (!file) {
        err << "error: cannot write '" << *c.output_path << "'\n";
        return kExitInputError;
    }
    file << text;
    return kExitOk;
}

}  // namespace

std::string_view to_string(Command command) {
    for (const auto& [cmd, name] : kCommandNames)
        if (cmd == command) return name;
    return "unknown";
}

Command command_from_string(std::string_view text) {
    for (const auto& [cmd, name] : kCommandNames)
        if (name == text) return cmd;
    throw std::invalid_argument("unknown command '" + std::string(text) + "'");
}

std::string_view to_string(OutputFormat format) { return format == OutputFormat::Json ? "json" : "csv"; }

OutputFormat output_format_from_string(std::string_view text) {
    if (text == "json") return OutputFormat::Json;
    if (text == "csv") return OutputFormat::Csv;
    throw std::invalid_argument("unknown format '" + std::string(text) + "'");
}

OutputFormat RunConfig::resolved_format() const {
    if (output_format) return *output_format;
    return command == Command::GapExperiment ? OutputFormat::Csv : OutputFormat::Json;
}

void RunConfig::validate() const {
    if (case_path.empty()) throw std::invalid_argument("a case file is required");
    if (n_runs < 1) throw std::invalid_argument("--runs must be at least 1");
    if (!(factor_lo >= 0.0)) throw std::invalid_argument("--lo must be non-negative");
    if (!(factor_lo <= factor_hi)) throw std::invalid_argument("--lo must not exceed --hi");
    if (jobs < 1) throw std::invalid_argument("--jobs must be at least 1");
    if (trace && command != Command::SolveAc) throw std::invalid_argument("--trace applies only to solve-ac");
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    NetworkCase net;
    try {
        config.validate();
        net = load_case_file(config.case_path);
    } catch (const ParseError& e) {
        err << "error: " << config.case_path << ": " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }

    try {
        const Artifact artifact = dispatch(config, net);
        const int written = emit(config, artifact.text, out, err);
        if (written != kExitOk) return written;
        if (artifact.status == kExitSolverFailure) err << "error: solver did not converge\n";
        return artifact.status;
    } catch (const InfeasibleError& e) {
        Json detail{{"error", e.what()}, {"violated", e.violated()}};
        err << "error: " << e.what() << '\n';
        for (const auto& label : e.violated()) err << "  violated: " << label << '\n';
        if (config.resolved_format() == OutputFormat::Json) emit(config, json_artifact(config, detail).text, out, err);
        return kExitSolverFailure;
    } catch (const SolverError& e) {
        err << "error: " << e.what() << '\n';
        return kExitSolverFailure;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitSolverFailure;
    } catch (const CaseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitSolverFailure;
    }
}

}  // namespace opflab
