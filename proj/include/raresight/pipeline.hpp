#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "raresight/design.hpp"
#include "raresight/mvn_impute.hpp"
#include "raresight/panel.hpp"
#include "raresight/report.hpp"
#include "raresight/selection.hpp"

namespace raresight {

inline constexpr const char* kVersion = "0.3.0";

/// Everything a run depends on. Defaults reproduce the published settings:
/// five imputations, three stratified folds, a 3-of-5 consensus and a
/// one-year lag.
struct PipelineConfig
{
    std::filesystem::path input;
    PanelSchema schema;
    int lag = 1;
    std::vector<std::string> first_difference;
    std::vector<std::string> years_since;
    int M = 5;
    int k = 3;
    int threshold = 3;
    std::vector<LinkKind> links{LinkKind::logit, LinkKind::cloglog};
    std::vector<SelectorKind> selectors{SelectorKind::lasso, SelectorKind::stepwise};
    std::uint64_t seed = 20240601;
    std::filesystem::path output = "out";
    EmOptions em;
    CvOptions cv;
    IrlsOptions irls;
    PoolOptions pool;

    void validate() const;
};

/// Parses a JSON config. A relative `input` path resolves against
/// `base_dir`. A manifest (object with a "config" member) is accepted too.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

using LogFn = std::function<void(std::string_view)>;

struct PreparedPanel
{
    PanelDataset panel;
    OnsetSeries onset;
};

/// Load, add first differences / years-since clocks, lag every covariate and
/// code the onset outcome.
PreparedPanel ingest(const PipelineConfig& config);

ImputationSet impute(const PipelineConfig& config, const PreparedPanel& prepared);

/// One design per imputation over every covariate. Columns constant on the
/// estimation rows of any imputation are dropped (reported via `log`).
std::vector<AnalysisMatrix> build_designs(const ImputationSet& set, const OnsetSeries& onset,
                                          const LogFn& log = {});

/// Selection for every configured (selector, link) pair.
std::vector<ModelResult> select_models(const PipelineConfig& config, const std::vector<AnalysisMatrix>& designs,
                                       const LogFn& log = {});

/// Refit, pool and compute AMEs for every model in place.
void fit_models(const PipelineConfig& config, const std::vector<AnalysisMatrix>& designs,
                std::vector<ModelResult>& models, const LogFn& log = {});

enum class Stage { ingest, impute, select, fit, ame, run };

struct ReportBundle
{
    std::vector<std::filesystem::path> files;
    std::vector<ModelResult> models;
    std::size_t rows = 0;
    std::size_t estimation_rows = 0;
    std::size_t events = 0;
    std::vector<std::string> warnings;
};

/// Runs the pipeline up to `last` and writes that stage's outputs into
/// config.output (`run` writes everything plus manifest.json).
ReportBundle run_pipeline(const PipelineConfig& config, Stage last = Stage::run, const LogFn& log = {});

} // namespace raresight
