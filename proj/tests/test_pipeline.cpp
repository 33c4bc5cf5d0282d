#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "raresight/csv.hpp"
#include "raresight/error.hpp"
#include "raresight/pipeline.hpp"
#include "raresight/simgen.hpp"

using namespace raresight;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

PooledFit pooled(std::vector<std::string> terms, std::vector<double> q, std::vector<double> se)
{
    PooledFit p;
    p.terms = std::move(terms);
    p.M = 5;
    p.qbar = Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    p.se = Eigen::Map<Eigen::VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
    return p;
}

// A small simulated panel shared by the end-to-end cases.
struct Workspace
{
    fs::path dir;
    fs::path panel;

    Workspace()
    {
        dir = fs::temp_directory_path() / "raresight_pipeline_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
        SimScenario sc;
        sc.n_countries = 40;
        sc.years_per_country = 25;
        sc.true_beta = {1.2, 0.0, 0.0, -0.8, 0.0, 0.0};
        sc.event_rate_target = 0.08;
        sc.missing_rate = 0.1;
        sc.seed = 3;
        auto [data, truth] = generate(sc);
        panel = dir / "panel_in.csv";
        write_panel(panel, data);
    }
    ~Workspace() { fs::remove_all(dir); }

    PipelineConfig config(const std::string& out) const
    {
        PipelineConfig c;
        c.input = panel;
        c.output = dir / out;
        c.M = 3;
        c.threshold = 2;
        c.cv.n_lambda = 25;
        c.seed = 99;
        return c;
    }
};

} // namespace

TEST_CASE("render_table text and csv")
{
    const auto a = pooled({kInterceptName, "Personalisation", "Protest"}, {-8.7812, 1.60714, 0.2}, {1.2, 0.79181, 0.1});
    const auto b = pooled({kInterceptName, "Protest"}, {-7.5, 0.3}, {1.0, 0.12});
    const std::string text = render_table({a, b}, {"lasso_logit", "lasso_cloglog"}, {"Personalisation", "Protest", "Unused"},
                                          TableStyle::text);
    std::istringstream lines(text);
    std::vector<std::string> rows;
    for (std::string l; std::getline(lines, l);) rows.push_back(l);
    const auto at = std::find_if(rows.begin(), rows.end(), [](const std::string& l) { return l.rfind("Personalisation", 0) == 0; });
    REQUIRE(at != rows.end());
    CHECK(at->find("1.6071") != std::string::npos);
    CHECK(at->find("—") != std::string::npos);
    CHECK((at + 1)->find("(0.7918)") != std::string::npos);
    CHECK(text.find("Unused") == std::string::npos);

    const std::string csvt = render_table({a, b}, {"lasso_logit", "lasso_cloglog"}, {"Personalisation", "Protest"},
                                          TableStyle::csv);
    std::istringstream in(csvt);
    const csv::Table t = csv::parse(in);
    CHECK(t.header == std::vector<std::string>{"term", "statistic", "lasso_logit", "lasso_cloglog"});
    REQUIRE(t.rows.size() == 6);
    CHECK(t.rows[2] == std::vector<std::string>{"Personalisation", "estimate", "1.6071", "—"});
    CHECK(t.rows[3] == std::vector<std::string>{"Personalisation", "se", "(0.7918)", ""});

    const auto null = pooled({kInterceptName}, {-3.2}, {0.2});
    const std::string empty = render_table({null}, {"stepwise_logit"}, {"Protest"}, TableStyle::text);
    CHECK(empty.find(kInterceptName) != std::string::npos);
    CHECK(empty.find("Protest") == std::string::npos);
    CHECK_THROWS_AS(render_table({}, {}, {}, TableStyle::text), InvalidArgument);
}

TEST_CASE("config parsing and validation")
{
    const auto j = nlohmann::json::parse(R"({
        "input": "data/panel.csv",
        "seed": 7,
        "schema": {"dv": "dv_alt", "kinds": {"score": "continuous"}, "exclude": ["dv_exists"]},
        "transforms": {"lag": 2, "first_difference": ["gdp"], "years_since": ["war"]},
        "imputation": {"m": 7},
        "selection": {"k": 4, "threshold": 4, "links": ["cloglog"], "selectors": ["stepwise"], "n_lambda": 50},
        "fit": {"barnard_rubin": true}
    })");
    const PipelineConfig c = config_from_json(j, "/base");
    CHECK(c.input == fs::path("/base/data/panel.csv"));
    CHECK(c.seed == 7);
    CHECK(c.schema.dv == "dv_alt");
    CHECK(c.schema.kinds.at("score") == ColumnKind::continuous);
    CHECK(c.lag == 2);
    CHECK(c.first_difference == std::vector<std::string>{"gdp"});
    CHECK(c.M == 7);
    CHECK(c.k == 4);
    CHECK(c.cv.k == 4);
    CHECK(c.cv.n_lambda == 50);
    CHECK(c.links == std::vector<LinkKind>{LinkKind::cloglog});
    CHECK(c.selectors == std::vector<SelectorKind>{SelectorKind::stepwise});
    CHECK(c.pool.barnard_rubin);
    CHECK_NOTHROW(c.validate());

    // Round trip through JSON, and manifests wrap the config.
    const PipelineConfig r = config_from_json(config_to_json(c));
    CHECK(r.input == c.input);
    CHECK(r.M == c.M);
    CHECK(r.links == c.links);
    nlohmann::json manifest;
    manifest["config"] = config_to_json(c);
    CHECK(config_from_json(manifest).threshold == 4);

    const PipelineConfig d = config_from_json(nlohmann::json::parse(R"({"input": "x.csv"})"));
    CHECK(d.M == 5);
    CHECK(d.k == 3);
    CHECK(d.threshold == 3);
    CHECK(d.lag == 1);
    CHECK(d.links.size() == 2);
    CHECK(d.selectors.size() == 2);

    PipelineConfig bad = d;
    bad.threshold = 6;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = d;
    bad.k = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = d;
    bad.links.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"selection": {"links": ["probit"]}})")), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"imputation": {"m": "five"}})")), InvalidArgument);
}

TEST_CASE("end-to-end run writes every artifact and replays byte-identically")
{
    Workspace ws;
    const PipelineConfig c = ws.config("run1");
    const ReportBundle b = run_pipeline(c);
    CHECK(b.models.size() == 4);
    CHECK(b.events > 0);
    for (const char* f : {"panel.csv", "imputed_m1.csv", "imputed_m3.csv", "em_log.jsonl", "selection.csv",
                          "selection.json", "pooled_coefs.csv", "coef_table.txt", "coef_table.csv", "ame.csv",
                          "fig1_data.csv", "manifest.json"})
        CHECK_MESSAGE(fs::exists(c.output / f), f);

    // The selection table has one count and one flag column per model.
    std::ifstream sel(c.output / "selection.csv");
    const csv::Table st = csv::parse(sel);
    CHECK(st.header == std::vector<std::string>{"term", "count_lasso_logit", "count_lasso_cloglog", "count_stepwise_logit",
                                                "count_stepwise_cloglog", "retained_lasso_logit", "retained_lasso_cloglog",
                                                "retained_stepwise_logit", "retained_stepwise_cloglog"});
    CHECK(st.rows.size() == 6);

    // Every model appears in the AME and plotting outputs; unselected terms are zero rows.
    std::ifstream fig(c.output / "fig1_data.csv");
    const csv::Table ft = csv::parse(fig);
    CHECK(ft.rows.size() == 4 * 6);

    // Replaying the manifest into a second directory reproduces the outputs.
    PipelineConfig replay = load_config(c.output / "manifest.json");
    replay.output = ws.dir / "run2";
    run_pipeline(replay);
    for (const char* f : {"panel.csv", "imputed_m2.csv", "selection.csv", "pooled_coefs.csv", "coef_table.csv", "ame.csv",
                          "fig1_data.csv"})
        CHECK_MESSAGE(slurp(c.output / f) == slurp(replay.output / f), f);

    const auto manifest = nlohmann::json::parse(slurp(c.output / "manifest.json"));
    CHECK(manifest["config"]["seed"] == 99);
    CHECK(manifest.contains("timings_ms"));
    CHECK(manifest["tool"] == "raresight");
}

TEST_CASE("stage runs write only their artifacts and agree with the full run")
{
    Workspace ws;
    PipelineConfig c = ws.config("full");
    c.selectors = {SelectorKind::lasso};
    c.links = {LinkKind::logit};
    run_pipeline(c);
    PipelineConfig s = c;
    s.output = ws.dir / "select_only";
    const ReportBundle b = run_pipeline(s, Stage::select);
    CHECK(fs::exists(s.output / "selection.csv"));
    CHECK(!fs::exists(s.output / "pooled_coefs.csv"));
    CHECK(b.files.size() == 2);
    CHECK(slurp(s.output / "selection.csv") == slurp(c.output / "selection.csv"));
}

TEST_CASE("errors carry the failing stage")
{
    Workspace ws;
    PipelineConfig c = ws.config("err");
    c.schema.dv = "no_such_column";
    try {
        run_pipeline(c);
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.stage() == "ingest");
    }
}

#ifdef RARESIGHT_CLI
TEST_CASE("command-line interface")
{
    Workspace ws;
    const std::string cli = RARESIGHT_CLI;
    const fs::path sim = ws.dir / "sim";
    const std::string simulate = cli + " simulate --countries 30 --years 20 --p 5 --nonzero 2 --event-rate 0.08 --missing 0.05 --seed 4 --out " +
                                 sim.string() + " > /dev/null";
    REQUIRE(std::system(simulate.c_str()) == 0);
    CHECK(fs::exists(sim / "panel.csv"));
    CHECK(fs::exists(sim / "truth.json"));

    nlohmann::json cfg;
    cfg["input"] = "sim/panel.csv";
    cfg["imputation"]["m"] = 3;
    cfg["selection"]["threshold"] = 2;
    cfg["selection"]["n_lambda"] = 20;
    std::ofstream(ws.dir / "config.json") << cfg.dump(2);

    const fs::path out = ws.dir / "cli_out";
    const std::string run = cli + " run -q --config " + (ws.dir / "config.json").string() + " --seed 5 --link logit --selector lasso --out " +
                            out.string() + " > /dev/null";
    REQUIRE(std::system(run.c_str()) == 0);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["config"]["seed"] == 5);
    CHECK(manifest["config"]["selection"]["links"] == nlohmann::json::array({"logit"}));

    const fs::path err = ws.dir / "stderr.txt";
    const std::string bad = cli + " ingest -q --config " + (ws.dir / "config.json").string() + " --dv missing_col --out " +
                            (ws.dir / "bad").string() + " > /dev/null 2> " + err.string();
    const int status = std::system(bad.c_str());
    CHECK(WEXITSTATUS(status) == 2);
    const auto report = nlohmann::json::parse(slurp(err));
    CHECK(report["status"] == "error");
    CHECK(report["stage"] == "ingest");
}
#endif
