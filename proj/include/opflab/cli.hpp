#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "opflab/feasibility.hpp"

namespace opflab {

enum class Command { SolveEd, SolveDc, SolveAc, PowerFlow, CheckFeasibility, GapExperiment, Validate };
enum class OutputFormat { Json, Csv };

std::string_view to_string(Command command);
Command command_from_string(std::string_view text);
std::string_view to_string(OutputFormat format);
OutputFormat output_format_from_string(std::string_view text);

struct RunConfig {
    Command command = Command::Validate;
    std::string case_path;
    std::uint64_t seed = 42;
    int n_runs = 500;
    double factor_lo = 0.6;
    double factor_hi = 1.2;
    int jobs = 1;
    /// Unset means CSV for gap-experiment and JSON for everything else.
    std::optional<OutputFormat> output_format;
    std::optional<std::string> output_path;
    LossMode loss_mode = LossMode::SlackAbsorbs;
    bool trace = false;

    [[nodiscard]] OutputFormat resolved_format() const;
    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolverFailure = 1;
inline constexpr int kExitInputError = 2;

/// Runs one command. The artifact goes to config.output_path or to out;
/// diagnostics go to err. Returns the process exit status.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace opflab
