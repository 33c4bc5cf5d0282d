// raresight: batch CLI for the rare-event selection / pooling pipeline.

#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "raresight/error.hpp"
#include "raresight/kernels.hpp"
#include "raresight/pipeline.hpp"
#include "raresight/simgen.hpp"

namespace fs = std::filesystem;
using namespace raresight;

namespace {

struct CommonFlags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> links;
    std::vector<std::string> selectors;
    std::string dv;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "JSON config or manifest.json to replay")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "root RNG seed (overrides config)");
    cmd->add_option("--out", f.out, "output directory (overrides config)");
    cmd->add_option("--link", f.links, "link(s) to run: logit, cloglog")->delimiter(',');
    cmd->add_option("--selector", f.selectors, "selector(s) to run: lasso, stepwise")->delimiter(',');
    cmd->add_option("--dv", f.dv, "existence column coded into the onset outcome");
    cmd->add_flag("-q,--quiet", f.quiet, "suppress progress output");
}

PipelineConfig resolve(const CommonFlags& f)
{
    PipelineConfig c = load_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (!f.out.empty()) c.output = f.out;
    if (!f.dv.empty()) {
        // The previous outcome must not leak in as a covariate.
        if (c.schema.dv != f.dv) c.schema.exclude.push_back(c.schema.dv);
        std::erase(c.schema.exclude, f.dv);
        c.schema.dv = f.dv;
    }
    if (!f.links.empty()) {
        c.links.clear();
        for (const auto& s : f.links) {
            auto l = parse_link(s);
            if (!l) throw InvalidArgument("unknown link '" + s + "'", "config");
            c.links.push_back(*l);
        }
    }
    if (!f.selectors.empty()) {
        c.selectors.clear();
        for (const auto& s : f.selectors) {
            auto sel = parse_selector(s);
            if (!sel) throw InvalidArgument("unknown selector '" + s + "'", "config");
            c.selectors.push_back(*sel);
        }
    }
    return c;
}

int report_error(const Error& e)
{
    nlohmann::ordered_json j;
    j["status"] = "error";
    j["stage"] = e.stage().empty() ? "unknown" : e.stage();
    j["message"] = e.what();
    std::cerr << j.dump() << '\n';
    return 2;
}

} // namespace

int main(int argc, char** argv)
{
    if (const char* threads = std::getenv("RARESIGHT_THREADS")) {
        const int n = std::atoi(threads);
        if (n > 0) kernels::set_max_threads(n);
    }

    CLI::App app{"raresight: penalized rare-event GLM selection over multiply imputed country-year panels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonFlags flags;
    const std::map<std::string, Stage> stages{{"ingest", Stage::ingest}, {"impute", Stage::impute},
                                              {"select", Stage::select}, {"fit", Stage::fit},
                                              {"ame", Stage::ame},       {"run", Stage::run}};
    const std::map<std::string, std::string> help{
        {"ingest", "load, transform and onset-code the panel; writes panel.csv"},
        {"impute", "bootstrap-EM imputation; writes imputed_m<k>.csv and em_log.jsonl"},
        {"select", "lasso / stepwise selection with consensus; writes selection.csv/json"},
        {"fit", "refit retained terms and pool; writes pooled_coefs.csv and coef tables"},
        {"ame", "average marginal effects; writes ame.csv and fig1_data.csv"},
        {"run", "full pipeline; writes every artifact plus manifest.json"}};
    std::map<std::string, CLI::App*> cmds;
    for (const auto& [name, st] : stages) {
        cmds[name] = app.add_subcommand(name, help.at(name));
        add_common(cmds[name], flags);
    }

    SimScenario sc;
    int p = 10, nonzero = 0;
    double effect = 1.0;
    std::string sim_out = "sim", sim_link = "logit";
    auto* sim = app.add_subcommand("simulate", "write a synthetic panel CSV plus truth.json");
    sim->add_option("--countries", sc.n_countries)->capture_default_str();
    sim->add_option("--years", sc.years_per_country)->capture_default_str();
    sim->add_option("--p", p, "number of covariates")->capture_default_str();
    sim->add_option("--nonzero", nonzero, "number of true effects (evenly spread)")->capture_default_str();
    sim->add_option("--effect", effect, "magnitude of each true effect (signs alternate)")->capture_default_str();
    sim->add_option("--event-rate", sc.event_rate_target)->capture_default_str();
    sim->add_option("--missing", sc.missing_rate, "MAR missing rate")->capture_default_str();
    sim->add_option("--correlation", sc.correlation)->capture_default_str();
    sim->add_option("--link", sim_link)->capture_default_str();
    sim->add_option("--seed", sc.seed)->capture_default_str();
    sim->add_option("--out", sim_out, "output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            auto link = parse_link(sim_link);
            if (!link) throw InvalidArgument("unknown link '" + sim_link + "'", "simulate");
            if (nonzero > p) throw InvalidArgument("--nonzero exceeds --p", "simulate");
            sc.link = *link;
            sc.true_beta.assign(static_cast<std::size_t>(p), 0.0);
            for (int k = 0; k < nonzero; ++k) {
                const auto idx = static_cast<std::size_t>(k * p / std::max(nonzero, 1));
                sc.true_beta[idx] = (k % 2 ? -effect : effect);
            }
            auto [panel, truth] = generate(sc);
            fs::create_directories(sim_out);
            write_panel(fs::path(sim_out) / "panel.csv", panel);
            write_truth(fs::path(sim_out) / "truth.json", sc, truth);
            std::cout << "wrote " << (fs::path(sim_out) / "panel.csv").string() << " ("
                      << panel.rows() << " rows, event rate " << truth.event_rate << ")\n";
            return 0;
        }

        for (const auto& [name, st] : stages) {
            if (!cmds[name]->parsed()) continue;
            const PipelineConfig config = resolve(flags);
            LogFn log;
            if (!flags.quiet) log = [](std::string_view m) { std::cerr << "[raresight] " << m << '\n'; };
            const ReportBundle bundle = run_pipeline(config, st, log);
            for (const auto& f : bundle.files) std::cout << f.string() << '\n';
        }
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_error(Error(e.what(), "unknown"));
    }
    return 0;
}
