// Command-line front end: run a procedure over a p-value file, run the
// Monte Carlo grid, or run the verification audits.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "onlinefdr/estimators.hpp"
#include "onlinefdr/procedures.hpp"
#include "onlinefdr/simulate.hpp"
#include "onlinefdr/verifier.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

// Shortest round-trip decimal representation, for byte-stable CSV output.
std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path + ": cannot open input file");
    }
    CsvTable table;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (line_no == 1) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size()) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": expected " + std::to_string(table.header.size()) +
                                         " fields, got " + std::to_string(fields.size()));
            }
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) {
        throw std::runtime_error(path + ":1: missing header row");
    }
    return table;
}

double parse_double(const std::string& s, const std::string& path, std::uint64_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": not a number: '" + s + "'");
    }
}

struct StoppingOptions {
    std::uint64_t max_r = 0;          // 0 means unset
    std::uint64_t max_stage = 0;
    std::uint64_t adaptive_r_base = 0;
    std::uint64_t adaptive_r_slope = 0;
    std::uint64_t adaptive_stage_base = 0;
    std::uint64_t adaptive_stage_slope = 0;

    std::optional<onlinefdr::StoppingRule> build() const {
        onlinefdr::StoppingRule rule;
        bool any = false;
        if (max_r > 0) { rule.max_rejections = max_r; any = true; }
        if (max_stage > 0) { rule.max_stage = max_stage; any = true; }
        if (adaptive_r_base > 0) {
            const auto base = adaptive_r_base, slope = adaptive_r_slope;
            rule.adaptive_max_rejections = [base, slope](const onlinefdr::ProcedureState& s) {
                return base + slope * s.rejection_count;
            };
            any = true;
        }
        if (adaptive_stage_base > 0) {
            const auto base = adaptive_stage_base, slope = adaptive_stage_slope;
            rule.adaptive_max_stage = [base, slope](const onlinefdr::ProcedureState& s) {
                return base + slope * s.rejection_count;
            };
            any = true;
        }
        if (!any) return std::nullopt;
        return rule;
    }
};

// --- run ---------------------------------------------------------------

int cmd_run(const std::string& input, const std::string& output, const std::string& procedure,
            double level, double pi, double lambda, std::uint64_t n_batch,
            const StoppingOptions& stopping) {
    using namespace onlinefdr;
    const ProcedureKind kind = procedure_from_name(procedure);
    const CsvTable table = read_csv(input);

    const int p_col = table.column("p");
    if (p_col < 0) {
        throw std::runtime_error(input + ":1: required column 'p' not found");
    }
    const int spec_col = table.column("spec_time");
    const int null_col = table.column("is_null");

    std::vector<double> p_values;
    std::vector<std::uint64_t> spec_times;
    std::vector<bool> is_null;
    bool have_truth = null_col >= 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::uint64_t line_no = r + 2;
        const double p = parse_double(table.rows[r][p_col], input, line_no);
        if (!(p > 0.0 && p <= 1.0)) {
            throw std::runtime_error(input + ":" + std::to_string(line_no) +
                                     ": p-value must lie in (0, 1], got " +
                                     table.rows[r][p_col]);
        }
        p_values.push_back(p);
        if (spec_col >= 0) {
            const double s = parse_double(table.rows[r][spec_col], input, line_no);
            if (s < 0 || s != std::floor(s) || s >= static_cast<double>(r + 1)) {
                throw std::runtime_error(input + ":" + std::to_string(line_no) +
                                         ": spec_time must be an integer in [0, i)");
            }
            spec_times.push_back(static_cast<std::uint64_t>(s));
        }
        if (null_col >= 0) {
            is_null.push_back(parse_double(table.rows[r][null_col], input, line_no) != 0.0);
        }
    }

    ProcedureDefinition def;
    def.kind = kind;
    def.config.level = level;
    def.config.spend_fraction = pi;
    def.config.lambda = lambda;
    def.config.stopping = stopping.build();
    if (kind == ProcedureKind::planned_lord || kind == ProcedureKind::planned_saffron) {
        if (!spec_times.empty()) {
            def.schedule = ScheduleSpec::from_spec_times(spec_times);
        } else if (n_batch > 0) {
            def.schedule = batch_schedule(p_values.size(), n_batch);
        } else if (!p_values.empty()) {
            throw std::runtime_error(
                "planned procedures need a spec_time column or --n-batch");
        } else {
            def.schedule = ScheduleSpec{};
        }
    }
    def.config.validate();

    const ProcedureState state =
        run_stream(def, p_values, have_truth ? &is_null : nullptr);

    if (!audit_constraints(state, family_of(kind)) &&
        kind != ProcedureKind::nonmono_strawman) {
        std::cerr << "internal error: constraint audit failed after the run\n";
        return kExitInvariant;
    }

    std::ofstream out(output, std::ios::binary);
    if (!out) {
        throw std::runtime_error(output + ": cannot open output file");
    }
    out << "index,p,alpha,lambda,rejected,fdp_hat_0,fdp_hat_lambda,rejections_so_far\n";
    std::uint64_t rejections = 0;
    double spent = 0.0;
    double screened = 0.0;
    bool lambda_ok = true;
    for (const auto& rec : state.records) {
        if (rec.rejected) ++rejections;
        spent += rec.alpha;
        if (rec.lambda) {
            if (rec.p > *rec.lambda) screened += rec.alpha / (1.0 - *rec.lambda);
        } else {
            lambda_ok = false;
        }
        const double denom = static_cast<double>(std::max<std::uint64_t>(1, rejections));
        out << rec.index << ',' << format_double(rec.p) << ',' << format_double(rec.alpha) << ','
            << (rec.lambda ? format_double(*rec.lambda) : std::string()) << ','
            << (rec.rejected ? 1 : 0) << ',' << format_double(spent / denom) << ','
            << (lambda_ok ? format_double(screened / denom) : std::string()) << ','
            << rejections << '\n';
    }
    return 0;
}

// --- simulate ----------------------------------------------------------

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(item, "--grid", 0));
    }
    if (out.empty()) throw std::runtime_error("empty grid list");
    return out;
}

void write_svg(const std::string& csv_path, const std::string& svg_path, double level);

int cmd_simulate(const std::string& output, const std::string& svg, std::uint64_t seed,
                 std::uint64_t iterations, bool full_grid, std::uint64_t t_max, double level,
                 double mu_alt, bool exact_count_nulls, const std::string& grid_n_batch,
                 const std::string& grid_rho, const std::string& grid_pi1,
                 const std::string& procedures, const StoppingOptions& stopping) {
    using namespace onlinefdr;

    std::vector<double> n_batches = parse_list(full_grid ? "1,5,10,50" : grid_n_batch);
    std::vector<double> rhos = parse_list(grid_rho);
    std::vector<double> pi1s =
        parse_list(full_grid ? "0,0.02,0.04,0.06,0.08,0.1,0.2,0.3,0.4,0.5" : grid_pi1);
    if (full_grid && iterations == 200) iterations = 1000;

    std::vector<ScenarioConfig> scenarios;
    for (double nb : n_batches) {
        for (double rho : rhos) {
            for (double pi1 : pi1s) {
                ScenarioConfig sc;
                sc.t_max = t_max;
                sc.pi1 = pi1;
                sc.rho = rho;
                sc.n_batch = static_cast<std::uint64_t>(nb);
                sc.mu_alt = mu_alt;
                sc.iterations = iterations;
                sc.master_seed = seed;
                sc.level = level;
                sc.exact_count_nulls = exact_count_nulls;
                sc.validate();
                scenarios.push_back(sc);
            }
        }
    }

    std::vector<NamedProcedure> procs;
    std::stringstream ss(procedures);
    std::string name;
    while (std::getline(ss, name, ',')) {
        NamedProcedure proc;
        proc.name = name;
        if (name == "lord") {
            proc.kind = ProcedureKind::planned_lord;
        } else if (name == "saffron") {
            proc.kind = ProcedureKind::planned_saffron;
        } else {
            throw std::runtime_error("simulate supports procedures 'lord' and 'saffron', got " + name);
        }
        proc.stopping = stopping.build();
        procs.push_back(std::move(proc));
    }
    if (procs.empty()) throw std::runtime_error("no procedures requested");

    const std::vector<GridCell> cells = run_grid(scenarios, procs);

    std::ofstream out(output, std::ios::binary);
    if (!out) throw std::runtime_error(output + ": cannot open output file");
    out << "procedure,n_batch,rho,pi1,iterations,fdr,mcse,mfdr,power\n";
    for (const auto& cell : cells) {
        out << cell.procedure << ',' << cell.n_batch << ',' << format_double(cell.rho) << ','
            << format_double(cell.pi1) << ',' << cell.iterations << ',' << format_double(cell.fdr)
            << ',' << format_double(cell.mcse) << ',' << format_double(cell.mfdr) << ','
            << format_double(cell.power) << '\n';
    }
    out.close();

    if (!svg.empty()) {
        write_svg(output, svg, level);
    }
    return 0;
}

// The figure is drawn from the results CSV alone, so it can be re-plotted
// from a saved file.
void write_svg(const std::string& csv_path, const std::string& svg_path, double level) {
    const CsvTable table = read_csv(csv_path);
    struct Point { double pi1, fdr, mcse; };
    std::map<std::string, std::vector<Point>> panels;   // key: procedure | n_batch | rho
    const int c_proc = table.column("procedure");
    const int c_nb = table.column("n_batch");
    const int c_rho = table.column("rho");
    const int c_pi1 = table.column("pi1");
    const int c_fdr = table.column("fdr");
    const int c_mcse = table.column("mcse");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string key = row[c_proc] + "  n_batch=" + row[c_nb] + "  rho=" + row[c_rho];
        panels[key].push_back({parse_double(row[c_pi1], csv_path, r + 2),
                               parse_double(row[c_fdr], csv_path, r + 2),
                               parse_double(row[c_mcse], csv_path, r + 2)});
    }

    const int pw = 280, ph = 200, margin = 44;
    const int cols = 4;
    const int n_panels = static_cast<int>(panels.size());
    const int rows = (n_panels + cols - 1) / cols;
    const int width = cols * pw + margin;
    const int height = rows * ph + margin;

    double y_max = level * 1.6;
    double x_max = 0.0;
    for (const auto& [key, pts] : panels) {
        for (const auto& pt : pts) {
            y_max = std::max(y_max, pt.fdr + 2.0 * pt.mcse + 0.005);
            x_max = std::max(x_max, pt.pi1);
        }
    }
    if (x_max <= 0.0) x_max = 1.0;

    std::ofstream out(svg_path, std::ios::binary);
    if (!out) throw std::runtime_error(svg_path + ": cannot open output file");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "' font-family='sans-serif' font-size='10'>\n";

    int idx = 0;
    for (const auto& [key, pts_in] : panels) {
        auto pts = pts_in;
        std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.pi1 < b.pi1; });
        const int px = (idx % cols) * pw + margin;
        const int py = (idx / cols) * ph + 24;
        const int iw = pw - 60, ih = ph - 56;
        auto sx = [&](double x) { return px + x / x_max * iw; };
        auto sy = [&](double y) { return py + ih - std::min(1.0, y / y_max) * ih; };

        out << "<text x='" << px << "' y='" << py - 8 << "'>" << key << "</text>\n";
        out << "<rect x='" << px << "' y='" << py << "' width='" << iw << "' height='" << ih
            << "' fill='none' stroke='#999'/>\n";

        // +-2 MCSE ribbon
        out << "<polygon fill='#9ecae1' fill-opacity='0.5' stroke='none' points='";
        for (const auto& pt : pts) out << sx(pt.pi1) << ',' << sy(pt.fdr + 2 * pt.mcse) << ' ';
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            out << sx(it->pi1) << ',' << sy(std::max(0.0, it->fdr - 2 * it->mcse)) << ' ';
        out << "'/>\n";

        out << "<polyline fill='none' stroke='#08519c' stroke-width='1.5' points='";
        for (const auto& pt : pts) out << sx(pt.pi1) << ',' << sy(pt.fdr) << ' ';
        out << "'/>\n";

        // dashed target level
        out << "<line x1='" << px << "' y1='" << sy(level) << "' x2='" << px + iw << "' y2='"
            << sy(level) << "' stroke='#333' stroke-dasharray='5,4'/>\n";

        out << "<text x='" << px - 6 << "' y='" << sy(level) + 3
            << "' text-anchor='end'>" << format_double(level) << "</text>\n";
        out << "<text x='" << px + iw / 2 << "' y='" << py + ih + 16
            << "' text-anchor='middle'>pi1</text>\n";
        out << "<text x='" << px - 28 << "' y='" << py + ih / 2
            << "' transform='rotate(-90 " << px - 28 << ' ' << py + ih / 2
            << ")' text-anchor='middle'>FDR</text>\n";
        ++idx;
    }
    out << "</svg>\n";
}

// --- verify ------------------------------------------------------------

int cmd_verify(const std::string& procedure, std::uint64_t trials, std::uint64_t length,
               std::uint64_t seed, bool expect_violations, std::uint64_t n_batch,
               const StoppingOptions& stopping) {
    using namespace onlinefdr;
    ProcedureDefinition def;
    def.kind = procedure_from_name(procedure);
    def.config.stopping = stopping.build();
    if (def.kind == ProcedureKind::planned_lord || def.kind == ProcedureKind::planned_saffron) {
        def.schedule = batch_schedule(length, n_batch > 0 ? n_batch : 1);
    }

    const Condition1Report report = check_condition_1(def, trials, length, seed);
    std::cout << "procedure: " << procedure << "\n"
              << "trials: " << report.trials << "\n"
              << "violations: " << report.violations << "\n";
    for (const auto& ce : report.counterexamples) {
        std::cout << "counterexample trial " << ce.trial_index << ": rejections "
                  << ce.rejections_base << " -> " << ce.rejections_perturbed
                  << " after decreasing";
        for (std::size_t i = 0; i < ce.base_stream.size(); ++i) {
            if (ce.perturbed_stream[i] != ce.base_stream[i]) {
                std::cout << " p[" << i + 1 << "]:" << format_double(ce.base_stream[i]) << "->"
                          << format_double(ce.perturbed_stream[i]);
            }
        }
        std::cout << "\n";
    }

    const bool ok = expect_violations ? report.violations > 0 : report.violations == 0;
    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online false discovery rate control: procedures, simulation, verification"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run a procedure over a p-value CSV");
    std::string run_input, run_output = "decisions.csv", run_procedure = "lord";
    double run_level = 0.05, run_pi = 0.1, run_lambda = 0.5;
    std::uint64_t run_n_batch = 0;
    StoppingOptions run_stopping;
    run->add_option("--input", run_input, "Input CSV with a 'p' column")->required();
    run->add_option("--output", run_output, "Decisions CSV path");
    run->add_option("--procedure", run_procedure,
                    "lord | saffron | alpha-investing | planned-lord | planned-saffron");
    run->add_option("--level", run_level, "Target FDR level alpha");
    run->add_option("--pi", run_pi, "Spending fraction");
    run->add_option("--lambda", run_lambda, "Screening parameter (SAFFRON family)");
    run->add_option("--n-batch", run_n_batch, "Batch size for planned schedules");
    run->add_option("--max-r", run_stopping.max_r, "Stop after this many rejections");
    run->add_option("--max-stage", run_stopping.max_stage, "Stop after this stage");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo grid");
    std::string sim_output = "results.csv", sim_svg, sim_procs = "lord,saffron";
    std::string sim_nb = "1,10", sim_rho = "0.3,0.6", sim_pi1 = "0,0.1,0.5";
    std::uint64_t sim_seed = 20260823, sim_iters = 200, sim_tmax = 500;
    double sim_level = 0.05, sim_mu = 3.0;
    bool sim_full = false, sim_exact = false;
    StoppingOptions sim_stopping;
    sim->add_option("--output", sim_output, "Results CSV path");
    sim->add_option("--svg", sim_svg, "Optional summary figure path");
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--iterations", sim_iters, "Iterations per cell");
    sim->add_flag("--full-grid", sim_full, "Full grid, 1000 iterations per cell");
    sim->add_option("--t-max", sim_tmax, "Hypotheses per stream");
    sim->add_option("--level", sim_level, "Target FDR level alpha");
    sim->add_option("--mu-alt", sim_mu, "Signal mean");
    sim->add_flag("--exact-count-nulls", sim_exact, "Exact-count signal subset");
    sim->add_option("--grid-n-batch", sim_nb, "Comma list of block sizes");
    sim->add_option("--grid-rho", sim_rho, "Comma list of within-block correlations");
    sim->add_option("--grid-pi1", sim_pi1, "Comma list of signal proportions");
    sim->add_option("--procedures", sim_procs, "Comma list: lord, saffron");
    sim->add_option("--max-r", sim_stopping.max_r, "Stop after this many rejections");
    sim->add_option("--max-stage", sim_stopping.max_stage, "Stop after this stage");

    // verify
    auto* ver = app.add_subcommand("verify", "Rejection-monotonicity perturbation audit");
    std::string ver_procedure = "lord";
    std::uint64_t ver_trials = 1000, ver_length = 100, ver_seed = 1, ver_n_batch = 0;
    bool ver_expect = false;
    StoppingOptions ver_stopping;
    ver->add_option("--procedure", ver_procedure, "Procedure to audit (or nonmono-strawman)");
    ver->add_option("--trials", ver_trials, "Perturbation trials");
    ver->add_option("--length", ver_length, "Stream length per trial");
    ver->add_option("--seed", ver_seed, "Seed");
    ver->add_flag("--expect-violations", ver_expect, "Negative control: pass iff violations found");
    ver->add_option("--n-batch", ver_n_batch, "Batch size for planned schedules");
    ver->add_option("--max-r", ver_stopping.max_r, "Stop after this many rejections");
    ver->add_option("--max-stage", ver_stopping.max_stage, "Stop after this stage");
    ver->add_option("--adaptive-r-base", ver_stopping.adaptive_r_base,
                    "Adaptive rejection cap: base + slope * rejections");
    ver->add_option("--adaptive-r-slope", ver_stopping.adaptive_r_slope, "Adaptive rejection cap slope");
    ver->add_option("--adaptive-stage-base", ver_stopping.adaptive_stage_base,
                    "Adaptive stage cap: base + slope * rejections");
    ver->add_option("--adaptive-stage-slope", ver_stopping.adaptive_stage_slope,
                    "Adaptive stage cap slope");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (run->parsed()) {
            return cmd_run(run_input, run_output, run_procedure, run_level, run_pi, run_lambda,
                           run_n_batch, run_stopping);
        }
        if (sim->parsed()) {
            return cmd_simulate(sim_output, sim_svg, sim_seed, sim_iters, sim_full, sim_tmax,
                                sim_level, sim_mu, sim_exact, sim_nb, sim_rho, sim_pi1, sim_procs,
                                sim_stopping);
        }
        if (ver->parsed()) {
            return cmd_verify(ver_procedure, ver_trials, ver_length, ver_seed, ver_expect,
                              ver_n_batch, ver_stopping);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
