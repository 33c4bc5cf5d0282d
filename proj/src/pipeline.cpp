#include "raresight/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include "raresight/csv.hpp"
#include "raresight/error.hpp"
#include "raresight/rng.hpp"

namespace raresight {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void PipelineConfig::validate() const
{
    if (input.empty()) throw InvalidArgument("config: no input file", "config");
    if (M < 2) throw InvalidArgument("config: need at least two imputations", "config");
    if (k < 2) throw InvalidArgument("config: need at least two folds", "config");
    if (threshold < 1 || threshold > M) throw InvalidArgument("config: threshold must lie in [1, M]", "config");
    if (lag < 0) throw InvalidArgument("config: lag must be >= 0", "config");
    if (links.empty()) throw InvalidArgument("config: at least one link required", "config");
    if (selectors.empty()) throw InvalidArgument("config: at least one selector required", "config");
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

ColumnKind parse_kind(const std::string& s)
{
    if (s == "binary") return ColumnKind::binary;
    if (s == "continuous") return ColumnKind::continuous;
    throw InvalidArgument("config: unknown column kind '" + s + "'", "config");
}

} // namespace

PipelineConfig config_from_json(const json& root, const fs::path& base_dir)
{
    const json& j = root.contains("config") && root.at("config").is_object() ? root.at("config") : root;
    PipelineConfig c;
    try {
        if (j.contains("input")) c.input = j.at("input").get<std::string>();
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
        read_opt(j, "seed", c.seed);
        if (j.contains("schema")) {
            const json& s = j.at("schema");
            read_opt(s, "country", c.schema.country);
            read_opt(s, "year", c.schema.year);
            read_opt(s, "dv", c.schema.dv);
            read_opt(s, "exclude", c.schema.exclude);
            if (s.contains("kinds"))
                for (auto& [name, kind] : s.at("kinds").items()) c.schema.kinds[name] = parse_kind(kind.get<std::string>());
        }
        if (j.contains("transforms")) {
            const json& t = j.at("transforms");
            read_opt(t, "lag", c.lag);
            read_opt(t, "first_difference", c.first_difference);
            read_opt(t, "years_since", c.years_since);
        }
        if (j.contains("imputation")) {
            const json& t = j.at("imputation");
            read_opt(t, "m", c.M);
            read_opt(t, "max_iter", c.em.max_iter);
            read_opt(t, "tol", c.em.tol);
        }
        if (j.contains("selection")) {
            const json& t = j.at("selection");
            read_opt(t, "k", c.k);
            read_opt(t, "threshold", c.threshold);
            read_opt(t, "n_lambda", c.cv.n_lambda);
            read_opt(t, "tol", c.cv.tol);
            if (t.contains("lambda_min_ratio") && !t.at("lambda_min_ratio").is_null())
                c.cv.lambda_min_ratio = t.at("lambda_min_ratio").get<double>();
            if (t.contains("links")) {
                c.links.clear();
                for (const auto& l : t.at("links")) {
                    auto link = parse_link(l.get<std::string>());
                    if (!link) throw InvalidArgument("config: unknown link '" + l.get<std::string>() + "'", "config");
                    c.links.push_back(*link);
                }
            }
            if (t.contains("selectors")) {
                c.selectors.clear();
                for (const auto& s : t.at("selectors")) {
                    auto sel = parse_selector(s.get<std::string>());
                    if (!sel) throw InvalidArgument("config: unknown selector '" + s.get<std::string>() + "'", "config");
                    c.selectors.push_back(*sel);
                }
            }
        }
        if (j.contains("fit")) {
            const json& t = j.at("fit");
            read_opt(t, "max_iter", c.irls.max_iter);
            read_opt(t, "tol", c.irls.tol);
            read_opt(t, "barnard_rubin", c.pool.barnard_rubin);
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what(), "config");
    }
    c.cv.k = c.k;
    if (!c.input.empty() && c.input.is_relative() && !base_dir.empty()) c.input = base_dir / c.input;
    return c;
}

ordered_json config_to_json(const PipelineConfig& c)
{
    ordered_json kinds = ordered_json::object();
    for (const auto& [name, kind] : c.schema.kinds) kinds[name] = std::string(to_string(kind));
    std::vector<std::string> links, selectors;
    for (auto l : c.links) links.emplace_back(to_string(l));
    for (auto s : c.selectors) selectors.emplace_back(to_string(s));
    ordered_json j;
    j["input"] = c.input.string();
    j["output"] = c.output.string();
    j["seed"] = c.seed;
    j["schema"] = {{"country", c.schema.country},
                   {"year", c.schema.year},
                   {"dv", c.schema.dv},
                   {"kinds", kinds},
                   {"exclude", c.schema.exclude}};
    j["transforms"] = {{"lag", c.lag}, {"first_difference", c.first_difference}, {"years_since", c.years_since}};
    j["imputation"] = {{"m", c.M}, {"max_iter", c.em.max_iter}, {"tol", c.em.tol}};
    ordered_json sel = {{"k", c.k},          {"threshold", c.threshold}, {"links", links},
                        {"selectors", selectors}, {"n_lambda", c.cv.n_lambda}, {"tol", c.cv.tol}};
    sel["lambda_min_ratio"] = c.cv.lambda_min_ratio ? ordered_json(*c.cv.lambda_min_ratio) : ordered_json(nullptr);
    j["selection"] = sel;
    j["fit"] = {{"max_iter", c.irls.max_iter}, {"tol", c.irls.tol}, {"barnard_rubin", c.pool.barnard_rubin}};
    return j;
}

PipelineConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config " + path.string(), "config");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("config " + path.string() + ": " + e.what(), "config");
    }
    return config_from_json(j, path.parent_path());
}

PreparedPanel ingest(const PipelineConfig& config)
{
    PreparedPanel out;
    PanelDataset panel = load_panel(config.input, config.schema);
    if (!config.first_difference.empty()) panel = first_difference(panel, config.first_difference);
    if (!config.years_since.empty()) panel = years_since(panel, config.years_since);
    if (config.lag > 0) panel = lag_covariates(panel, config.lag);
    out.onset = code_onset(panel);
    out.panel = std::move(panel);
    return out;
}

ImputationSet impute(const PipelineConfig& config, const PreparedPanel& prepared)
{
    return bootstrap_impute(prepared.panel, prepared.onset, config.M, config.seed, config.em);
}

std::vector<AnalysisMatrix> build_designs(const ImputationSet& set, const OnsetSeries& onset, const LogFn& log)
{
    std::vector<AnalysisMatrix> designs;
    for (const auto& d : set.datasets) designs.push_back(build_design(d, onset));
    if (designs.empty()) return designs;
    std::vector<std::string> keep;
    for (Eigen::Index j = 0; j < designs.front().p(); ++j) {
        bool constant = false;
        for (const auto& d : designs) {
            const auto col = d.X.col(j);
            constant = constant || col.maxCoeff() == col.minCoeff();
        }
        const auto& name = designs.front().terms[static_cast<std::size_t>(j)].name;
        if (constant) {
            if (log) log("dropping column '" + name + "': constant on the estimation rows");
        } else {
            keep.push_back(name);
        }
    }
    if (static_cast<Eigen::Index>(keep.size()) != designs.front().p())
        for (auto& d : designs) d = d.select(keep);
    return designs;
}

std::vector<ModelResult> select_models(const PipelineConfig& config, const std::vector<AnalysisMatrix>& designs,
                                       const LogFn& log)
{
    std::vector<ModelResult> models;
    for (SelectorKind sel : config.selectors) {
        for (LinkKind link : config.links) {
            ModelResult m;
            m.selector = sel;
            m.link = link;
            if (log) log("selecting: " + m.tag());
            if (sel == SelectorKind::lasso) {
                const std::uint64_t seed = derive_seed(config.seed, "cv:" + std::string(to_string(link)));
                m.selection = lasso_select(designs, link, seed, config.threshold, config.cv);
            } else {
                m.selection = stepwise_select(designs, link, config.threshold, config.irls);
            }
            if (log)
                for (const auto& w : m.selection.warnings) log("warning [" + m.tag() + "]: " + w);
            models.push_back(std::move(m));
        }
    }
    return models;
}

void fit_models(const PipelineConfig& config, const std::vector<AnalysisMatrix>& designs,
                std::vector<ModelResult>& models, const LogFn& log)
{
    for (auto& m : models) {
        if (log) log("refitting: " + m.tag());
        std::vector<std::string> warnings;
        const auto fits = refit_selected(designs, m.selection.retained, m.link, config.irls, &warnings);
        if (log)
            for (const auto& w : warnings) log("warning [" + m.tag() + "]: " + w);
        const double complete_df = static_cast<double>(designs.front().n()) - static_cast<double>(fits.front().n_params());
        m.pooled = rubin_pool(fits, config.pool, complete_df);
        m.ame = average_marginal_effects(fits, designs, m.selection.retained, config.pool);
        m.fitted = true;
    }
}

namespace {

template <class F>
auto stage(const char* name, F&& f)
{
    try {
        return f();
    } catch (Error& e) {
        if (e.stage().empty()) e.set_stage(name);
        throw;
    } catch (const std::exception& e) {
        throw Error(e.what(), name);
    }
}

void write_selection_json(const fs::path& path, const std::vector<ModelResult>& models)
{
    ordered_json j = ordered_json::array();
    for (const auto& m : models) {
        ordered_json e;
        e["model"] = m.tag();
        e["selector"] = std::string(to_string(m.selector));
        e["link"] = std::string(to_string(m.link));
        e["threshold"] = m.selection.threshold;
        e["retained"] = m.selection.retained;
        e["per_imputation"] = m.selection.per_imputation_active;
        if (m.selector == SelectorKind::lasso) {
            e["chosen_lambda"] = m.selection.chosen_lambdas;
            e["kkt_max_violation"] = m.selection.kkt_max_violation;
        }
        e["warnings"] = m.selection.warnings;
        j.push_back(e);
    }
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

} // namespace

ReportBundle run_pipeline(const PipelineConfig& config, Stage last, const LogFn& log)
{
    using clock = std::chrono::steady_clock;
    config.validate();
    fs::create_directories(config.output);
    ReportBundle bundle;
    ordered_json timings = ordered_json::object();
    auto timed = [&](const char* name, auto&& f) {
        const auto t0 = clock::now();
        auto r = stage(name, f);
        timings[name] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        return r;
    };
    auto emit = [&](const fs::path& p) { bundle.files.push_back(p); };
    const fs::path& out = config.output;

    if (log) log("ingest: " + config.input.string());
    PreparedPanel prepared = timed("ingest", [&] { return ingest(config); });
    bundle.rows = prepared.panel.rows();
    bundle.estimation_rows = prepared.onset.observed();
    bundle.events = prepared.onset.events();
    if (log)
        log(std::to_string(bundle.rows) + " rows, " + std::to_string(bundle.estimation_rows) + " estimation rows, " +
            std::to_string(bundle.events) + " onsets");
    if (last == Stage::ingest || last == Stage::run) {
        write_panel(out / "panel.csv", prepared.panel, &prepared.onset);
        emit(out / "panel.csv");
    }
    if (last == Stage::ingest) return bundle;

    if (log) log("impute: M=" + std::to_string(config.M));
    ImputationSet set = timed("impute", [&] { return impute(config, prepared); });
    if (last == Stage::impute || last == Stage::run) {
        write_imputations(out, set, prepared.onset);
        for (std::size_t m = 0; m < set.size(); ++m) emit(out / ("imputed_m" + std::to_string(m + 1) + ".csv"));
        emit(out / "em_log.jsonl");
    }
    if (last == Stage::impute) return bundle;

    LogFn collect = [&](std::string_view msg) {
        bundle.warnings.emplace_back(msg);
        if (log) log(msg);
    };
    const auto designs = timed("design", [&] { return build_designs(set, prepared.onset, collect); });
    const auto terms = designs.front().term_names();

    bundle.models = timed("select", [&] { return select_models(config, designs, log); });
    for (const auto& m : bundle.models)
        for (const auto& w : m.selection.warnings) bundle.warnings.push_back(m.tag() + ": " + w);
    if (last == Stage::select || last == Stage::run) {
        write_selection_csv(out / "selection.csv", terms, bundle.models);
        write_selection_json(out / "selection.json", bundle.models);
        emit(out / "selection.csv");
        emit(out / "selection.json");
    }
    if (last == Stage::select) return bundle;

    timed("fit", [&] {
        fit_models(config, designs, bundle.models, collect);
        return 0;
    });
    if (last == Stage::fit || last == Stage::run) {
        std::vector<PooledFit> pooled;
        std::vector<std::string> headers;
        for (const auto& m : bundle.models) {
            pooled.push_back(m.pooled);
            headers.push_back(m.tag());
        }
        write_pooled_csv(out / "pooled_coefs.csv", bundle.models);
        std::ofstream(out / "coef_table.txt", std::ios::binary) << render_table(pooled, headers, terms, TableStyle::text);
        std::ofstream(out / "coef_table.csv", std::ios::binary) << render_table(pooled, headers, terms, TableStyle::csv);
        emit(out / "pooled_coefs.csv");
        emit(out / "coef_table.txt");
        emit(out / "coef_table.csv");
    }
    if (last == Stage::ame || last == Stage::run) {
        write_ame_csv(out / "ame.csv", bundle.models);
        write_fig1_csv(out / "fig1_data.csv", terms, bundle.models);
        emit(out / "ame.csv");
        emit(out / "fig1_data.csv");
    }
    if (last != Stage::run) return bundle;

    ordered_json manifest;
    manifest["tool"] = "raresight";
    manifest["version"] = kVersion;
    manifest["config"] = config_to_json(config);
    ordered_json seeds;
    seeds["root"] = config.seed;
    seeds["imputation"] = set.seeds;
    for (LinkKind link : config.links) {
        const std::string name = "cv:" + std::string(to_string(link));
        seeds[name] = derive_seed(config.seed, name);
    }
    manifest["seeds"] = seeds;
    manifest["data"] = {{"rows", bundle.rows}, {"estimation_rows", bundle.estimation_rows}, {"onsets", bundle.events},
                        {"terms", terms}};
    manifest["timings_ms"] = timings;
    std::vector<std::string> files;
    for (const auto& f : bundle.files) files.push_back(f.filename().string());
    manifest["outputs"] = files;
    manifest["warnings"] = bundle.warnings;
    std::ofstream(out / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
    emit(out / "manifest.json");
    return bundle;
}

} // namespace raresight
