#pragma once

// Canonical JSON and CSV forms of every result record, with matching readers.
// Infinite bounds are written as null. Bus references use external bus ids.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "opflab/acopf.hpp"
#include "opflab/dispatch.hpp"
#include "opflab/feasibility.hpp"
#include "opflab/network.hpp"
#include "opflab/power_flow.hpp"

namespace opflab {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

Json to_json(const NetworkCase& net);
NetworkCase case_from_json(const Json& j);

Json to_json(const DispatchSolution& solution);
DispatchSolution dispatch_from_json(const Json& j);

Json to_json(const QpDiagnostics& diagnostics);
QpDiagnostics diagnostics_from_json(const Json& j);

/// Solution fields plus a "diagnostics" object; ED adds "lambda".
Json to_json(const EdResult& result);
Json to_json(const DcOpfResult& result);

Json to_json(const PfSolution& pf, const NetworkCase& net);
PfSolution pf_from_json(const Json& j, const NetworkCase& net);

Json to_json(const ResidualVector& residual, const NetworkCase& net);
ResidualVector residual_from_json(const Json& j, const NetworkCase& net);

Json to_json(const AcOpfResult& result);
AcOpfResult acopf_from_json(const Json& j);

Json to_json(const FeasibilityReport& report, const NetworkCase& net);
FeasibilityReport report_from_json(const Json& j, const NetworkCase& net);

Json to_json(const std::vector<AssumptionCheck>& checks);

inline constexpr const char* kExperimentHeader = "run_id,load_factor_mean,total_load,dc_total_gen,ac_total_gen,gap,ac_converged";
inline constexpr const char* kResidualHeader = "bus_id,p_residual,q_residual";
inline constexpr const char* kTraceHeader = "iteration,barrier,kkt_norm,feas_norm,objective";

/// Comment lines ("# key=value") written ahead of a CSV header.
using CsvPreamble = std::vector<std::pair<std::string, std::string>>;

struct CsvTable {
    CsvPreamble preamble;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Reads a CSV written by this library. Throws ParseError on ragged rows.
CsvTable read_csv(std::istream& in);

void write_experiment_csv(std::ostream& out, const std::vector<GapExperimentRow>& rows, const CsvPreamble& preamble = {});
std::vector<GapExperimentRow> read_experiment_csv(std::istream& in);

void write_residual_csv(std::ostream& out, const ResidualVector& residual, const NetworkCase& net,
                        const CsvPreamble& preamble = {});
ResidualVector read_residual_csv(std::istream& in, const NetworkCase& net);

void write_trace_csv(std::ostream& out, const std::vector<AcOpfTraceRow>& trace, const CsvPreamble& preamble = {});
std::vector<AcOpfTraceRow> read_trace_csv(std::istream& in);

}  // namespace opflab
