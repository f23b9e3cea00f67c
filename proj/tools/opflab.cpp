#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "opflab/cli.hpp"

int main(int argc, char** argv) {
    using namespace opflab;

    CLI::App app{"Power-grid optimization laboratory: ED, DC OPF, AC PF, AC OPF and DC/AC feasibility checks"};
    app.require_subcommand(1);

    RunConfig config;
    std::string format;
    std::string loss_mode = "slack-absorbs";
    std::string out_path;

    const std::map<std::string, Command> commands{
        {"solve-ed", Command::SolveEd},
        {"solve-dc", Command::SolveDc},
        {"solve-ac", Command::SolveAc},
        {"power-flow", Command::PowerFlow},
        {"check-feasibility", Command::CheckFeasibility},
        {"gap-experiment", Command::GapExperiment},
        {"validate", Command::Validate},
    };
    const std::map<std::string, std::string> help{
        {"solve-ed", "Economic dispatch (no network)"},
        {"solve-dc", "DC optimal power flow"},
        {"solve-ac", "AC optimal power flow"},
        {"power-flow", "Newton power flow at the case's stored dispatch"},
        {"check-feasibility", "Loss-adjusted DC point residuals and sign certificates"},
        {"gap-experiment", "Randomized DC vs AC total-generation experiment"},
        {"validate", "Check the modelling assumptions on a case"},
    };

    for (const auto& [name, command] : commands) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("case", config.case_path, "MATPOWER-style case file")->required();
        sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--out", out_path, "Write output to this file instead of stdout");
        if (command == Command::GapExperiment) {
            sub->add_option("--seed", config.seed, "Random seed")->capture_default_str();
            sub->add_option("--runs", config.n_runs, "Number of runs")->capture_default_str();
            sub->add_option("--lo", config.factor_lo, "Lowest per-bus load factor")->capture_default_str();
            sub->add_option("--hi", config.factor_hi, "Highest per-bus load factor")->capture_default_str();
            sub->add_option("--jobs", config.jobs, "Worker threads")->capture_default_str();
        }
        if (command == Command::CheckFeasibility) {
            sub->add_option("--loss-mode", loss_mode, "Loss adjustment")
                ->check(CLI::IsMember({"slack-absorbs", "fictitious-demand"}))
                ->capture_default_str();
        }
        if (command == Command::SolveAc) sub->add_flag("--trace", config.trace, "Emit the per-iteration trace as CSV");
        sub->callback([&config, command = command] { config.command = command; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int status = app.exit(e);
        return status == 0 ? 0 : kExitInputError;
    }

    try {
        if (!format.empty()) config.output_format = output_format_from_string(format);
        config.loss_mode = loss_mode_from_string(loss_mode);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInputError;
    }
    if (!out_path.empty()) config.output_path = out_path;
    return run(config, std::cout, std::cerr);
}
