#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "opflab/network.hpp"

namespace opflab {

namespace {

struct Row {
    int line = 0;
    std::vector<double> values;
};

struct Table {
    int line = 0;
    std::vector<Row> rows;
};

struct RawCase {
    std::optional<double> base_mva;
    int base_line = 0;
    std::map<std::string, Table> tables;
    int last_line = 0;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Drops a trailing '%' comment, ignoring '%' inside single-quoted strings.
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\'') quoted = !quoted;
        if (line[i] == '%' && !quoted) return line.substr(0, i);
    }
    return line;
}

double parse_number(std::string_view token, int line) {
    if (token == "Inf" || token == "inf" || token == "+Inf") return std::numeric_limits<double>::infinity();
    if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double value = 0.0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ParseError(line, "expected a number, found '" + std::string(token) + "'");
    return value;
}

// Splits "lhs = rhs" where lhs is "<ident>.<field>"; returns the field name.
std::optional<std::pair<std::string, std::string_view>> field_assignment(std::string_view line) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    const auto lhs = trim(line.substr(0, eq));
    const auto dot = lhs.find('.');
    if (dot == std::string_view::npos) return std::nullopt;
    std::string field(trim(lhs.substr(dot + 1)));
    if (field.empty()) return std::nullopt;
    for (char c : field) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return std::nullopt;
    }
    return std::make_pair(field, trim(line.substr(eq + 1)));
}

RawCase scan(std::string_view text) {
    RawCase raw;
    std::istringstream in{std::string(text)};
    std::string buffer;
    int line_no = 0;

    Table* open = nullptr;
    std::string open_name;
    Row pending;
    bool skipping_cell = false;

    auto flush_row = [&](int line) {
        if (!pending.values.empty()) {
            pending.line = pending.line ? pending.line : line;
            open->rows.push_back(std::move(pending));
        }
        pending = Row{};
    };

    auto consume_matrix_text = [&](std::string_view body, int line) {
        std::size_t i = 0;
        while (i < body.size()) {
            const char c = body[i];
            if (c == ']') {
                flush_row(line);
                open = nullptr;
                const auto rest = trim(body.substr(i + 1));
                if (!rest.empty() && rest != ";")
                    throw ParseError(line, "unexpected text after ']' in table '" + open_name + "'");
                return;
            }
            if (c == ';') {
                flush_row(line);
                ++i;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < body.size() && !std::isspace(static_cast<unsigned char>(body[j])) && body[j] != ',' &&
                   body[j] != ';' && body[j] != ']')
                ++j;
            if (pending.values.empty()) pending.line = line;
            pending.values.push_back(parse_number(body.substr(i, j - i), line));
            i = j;
        }
        // A newline also terminates a matrix row.
        flush_row(line);
    };

    while (std::getline(in, buffer)) {
        ++line_no;
        const auto line = trim(strip_comment(buffer));

        if (skipping_cell) {
            if (line.find('}') != std::string_view::npos) skipping_cell = false;
            continue;
        }
        if (open) {
            consume_matrix_text(line, line_no);
            continue;
        }
        if (line.empty() || line.starts_with("function")) continue;

        const auto assignment = field_assignment(line);
        if (!assignment) {
            throw ParseError(line_no, "expected an assignment of the form 'mpc.<field> = ...'");
        }
        const auto& [field, rhs] = *assignment;
        if (rhs.starts_with("[")) {
            if (raw.tables.contains(field)) throw ParseError(line_no, "table '" + field + "' defined twice");
            open_name = field;
            open = &raw.tables[field];
            open->line = line_no;
            pending = Row{};
            consume_matrix_text(rhs.substr(1), line_no);
        } else if (rhs.starts_with("{")) {
            skipping_cell = rhs.find('}') == std::string_view::npos;
        } else if (field == "baseMVA") {
            auto value = trim(rhs);
            if (value.ends_with(";")) value.remove_suffix(1);
            raw.base_mva = parse_number(trim(value), line_no);
            raw.base_line = line_no;
        }
        // Other scalar or string fields (version, areas, ...) are ignored.
    }
    raw.last_line = line_no;
    if (open) throw ParseError(line_no, "unterminated table '" + open_name + "' (missing ']')");
    if (skipping_cell) throw ParseError(line_no, "unterminated cell array (missing '}')");
    return raw;
}

const Table& require_table(const RawCase& raw, const std::string& name) {
    const auto it = raw.tables.find(name);
    if (it == raw.tables.end()) throw ParseError(raw.last_line, "missing required table 'mpc." + name + "'");
    return it->second;
}

void require_columns(const Row& row, std::size_t count, const std::string& table) {
    if (row.values.size() < count)
        throw ParseError(row.line, table + " row has " + std::to_string(row.values.size()) +
                                       " columns, expected at least " + std::to_string(count));
}

int as_int(double value, int line, const char* what) {
    if (value != std::floor(value) || std::abs(value) > 1e9)
        throw ParseError(line, std::string(what) + " must be an integer");
    return static_cast<int>(value);
}

std::string at_line(int line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

NetworkCase parse_case(std::string_view text) {
    const auto raw = scan(text);
    if (!raw.base_mva) throw ParseError(raw.last_line, "missing 'mpc.baseMVA'");

    NetworkCase net;
    net.base_mva = *raw.base_mva;
    if (!(net.base_mva > 0.0)) throw ParseError(raw.base_line, "baseMVA must be positive");
    const double base = net.base_mva;

    for (const auto& row : require_table(raw, "bus").rows) {
        require_columns(row, 13, "bus");
        const auto& v = row.values;
        Bus bus;
        bus.id = as_int(v[0], row.line, "bus number");
        switch (as_int(v[1], row.line, "bus type")) {
            case 1: bus.kind = BusKind::PQ; break;
            case 2: bus.kind = BusKind::PV; break;
            case 3: bus.kind = BusKind::Slack; break;
            case 4: throw CaseError(at_line(row.line) + "isolated buses (type 4) are not supported");
            default: throw ParseError(row.line, "bus type must be 1, 2, 3 or 4");
        }
        bus.p_load = v[2] / base;
        bus.q_load = v[3] / base;
        bus.g_shunt = v[4] / base;
        bus.b_shunt = v[5] / base;
        bus.v_max = v[11];
        bus.v_min = v[12];
        net.buses.push_back(bus);
    }

    auto bus_index = [&](double number, int line) {
        const int id = as_int(number, line, "bus reference");
        const auto index = net.index_of(id);
        if (!index) throw CaseError(at_line(line) + "reference to unknown bus " + std::to_string(id));
        return *index;
    };

    const auto& gen_rows = require_table(raw, "gen").rows;
    const auto& cost_rows = require_table(raw, "gencost").rows;
    if (cost_rows.size() < gen_rows.size())
        throw ParseError(cost_rows.empty() ? require_table(raw, "gencost").line : cost_rows.back().line,
                         "gencost has fewer rows than gen");

    for (std::size_t k = 0; k < gen_rows.size(); ++k) {
        const auto& row = gen_rows[k];
        require_columns(row, 10, "gen");
        const auto& v = row.values;
        if (v[7] <= 0.0) continue;  // out of service

        Generator gen;
        gen.bus = bus_index(v[0], row.line);
        gen.pg = v[1] / base;
        gen.qg = v[2] / base;
        gen.q_max = v[3] / base;
        gen.q_min = v[4] / base;
        gen.v_set = v[5];
        gen.p_max = v[8] / base;
        gen.p_min = v[9] / base;

        const auto& cost = cost_rows[k];
        require_columns(cost, 4, "gencost");
        const int model = as_int(cost.values[0], cost.line, "cost model");
        if (model != 2) throw CaseError(at_line(cost.line) + "only polynomial generator costs (model 2) are supported");
        const int terms = as_int(cost.values[3], cost.line, "cost term count");
        if (terms < 0 || terms > 3)
            throw CaseError(at_line(cost.line) + "polynomial costs must have degree <= 2");
        require_columns(cost, 4 + static_cast<std::size_t>(terms), "gencost");
        // Coefficients run from highest to lowest degree against MW.
        double coeff[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
        for (int t = 0; t < terms; ++t) coeff[terms - 1 - t] = cost.values[4 + static_cast<std::size_t>(t)];
        gen.cost_a = coeff[2] * base * base;
        gen.cost_b = coeff[1] * base;
        gen.cost_c = coeff[0];
        net.generators.push_back(gen);
    }

    for (const auto& row : require_table(raw, "branch").rows) {
        require_columns(row, 11, "branch");
        const auto& v = row.values;
        if (v[10] <= 0.0) continue;
        Branch br;
        br.from = bus_index(v[0], row.line);
        br.to = bus_index(v[1], row.line);
        br.r = v[2];
        br.x = v[3];
        br.b_shunt = v[4];
        if (v[5] > 0.0) br.flow_limit = v[5] / base;
        br.tap = v[8] == 0.0 ? 1.0 : v[8];
        if (v[9] != 0.0)
            throw CaseError(at_line(row.line) + "phase-shifting transformers are not supported");
        if (!(br.x > 0.0))
            throw CaseError(at_line(row.line) +
                            "nonpositive reactance violates Assumption 4 (positive line reactance)");
        net.branches.push_back(br);
    }

    check_case_structure(net);
    return net;
}

NetworkCase load_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open case file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_case(text.str());
}

}  // namespace opflab
