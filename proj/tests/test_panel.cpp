#include "doctest.h"

#include <random>
#include <sstream>

#include "raresight/design.hpp"
#include "raresight/error.hpp"
#include "raresight/panel.hpp"

using namespace raresight;

namespace {

PanelDataset parse(const std::string& text, const PanelSchema& schema = {})
{
    std::istringstream in(text);
    return parse_panel(in, schema);
}

std::vector<std::optional<int>> y_of(const std::string& csv)
{
    return code_onset(parse(csv)).y;
}

std::vector<std::optional<double>> col(const PanelDataset& d, const std::string& name)
{
    const Column& c = d.column(name);
    std::vector<std::optional<double>> out;
    for (std::size_t i = 0; i < d.rows(); ++i)
        out.push_back(c.observed[i] ? std::optional<double>(c.values[i]) : std::nullopt);
    return out;
}

using OD = std::vector<std::optional<double>>;
using OI = std::vector<std::optional<int>>;
constexpr auto NA = std::nullopt;

} // namespace

TEST_CASE("load_panel maps cells and masks")
{
    const auto d = parse("country,year,dv_exists,gdp,war\n"
                         "AAA,1990,0,1.5,0\n"
                         "AAA,1991,0,,1\n"
                         "AAA,1992,NA,2.5,NA\n");
    REQUIRE(d.rows() == 3);
    CHECK(d.column("gdp").missing_count() == 1);
    CHECK(d.column("gdp").observed[1] == 0);
    CHECK(d.column("gdp").values[2] == 2.5);
    CHECK(!d.existence[2].has_value());
    CHECK(d.column("war").kind == ColumnKind::binary);
    CHECK(d.column("gdp").kind == ColumnKind::continuous);
}

TEST_CASE("load_panel kind inference and overrides")
{
    const std::string csv = "country,year,dv_exists,score\nA,1,0,0\nA,2,0,1\nA,3,0,1\n";
    CHECK(parse(csv).column("score").kind == ColumnKind::binary);
    PanelSchema s;
    s.kinds["score"] = ColumnKind::continuous;
    CHECK(parse(csv, s).column("score").kind == ColumnKind::continuous);
    s.exclude = {"score"};
    CHECK(!parse(csv, s).has_column("score"));
}

TEST_CASE("load_panel sorts rows and rejects malformed input")
{
    const auto d = parse("country,year,dv_exists,x\nB,1990,0,1\nA,1991,0,2\nA,1990,0,3\n");
    CHECK(d.country == std::vector<std::string>{"A", "A", "B"});
    CHECK(d.year == std::vector<int>{1990, 1991, 1990});
    CHECK(col(d, "x") == OD{3.0, 2.0, 1.0});

    CHECK_THROWS_AS(parse("country,year,dv_exists,x\nIRN,1957,0,1\nIRN,1957,1,2\n"), DuplicateKey);
    CHECK_THROWS_AS(parse("country,year,dv_exists,x\nIRN,19x7,0,1\n"), ParseError);
    CHECK_THROWS_AS(parse("country,year,dv_exists,x\nIRN,1957,0,abc\n"), ParseError);
    CHECK_THROWS_AS(parse("country,dv_exists,x\nIRN,0,1\n"), ParseError);
}

TEST_CASE("code_onset")
{
    SUBCASE("single transition then censoring")
    {
        CHECK(y_of("country,year,dv_exists\nA,1960,0\nA,1961,0\nA,1962,1\nA,1963,1\n") ==
              OI{0, 0, 1, NA});
    }
    SUBCASE("year gap suppresses formation")
    {
        CHECK(y_of("country,year,dv_exists\nA,1960,0\nA,1961,0\nA,1965,1\n") == OI{0, 0, NA});
    }
    SUBCASE("existing at panel entry")
    {
        CHECK(y_of("country,year,dv_exists\nA,1960,1\nA,1961,1\nA,1962,0\nA,1963,1\n") ==
              OI{NA, NA, 0, 1});
    }
    SUBCASE("missing predecessor")
    {
        CHECK(y_of("country,year,dv_exists\nA,1960,0\nA,1961,NA\nA,1962,1\n") == OI{0, NA, NA});
    }
    SUBCASE("countries are independent")
    {
        CHECK(y_of("country,year,dv_exists\nA,1960,0\nA,1961,1\nB,1962,1\nB,1963,1\n") ==
              OI{0, 1, NA, NA});
    }
    SUBCASE("invalid existence")
    {
        CHECK_THROWS_AS(code_onset(parse("country,year,dv_exists\nA,1960,2\n")), InvalidArgument);
    }
}

TEST_CASE("code_onset property: at most one onset per spell and idempotent recoding")
{
    std::mt19937_64 rng(7);
    std::bernoulli_distribution flip(0.15), gap(0.05), miss(0.05);
    for (int rep = 0; rep < 200; ++rep) {
        std::ostringstream csv;
        csv << "country,year,dv_exists\n";
        int state = 0, year = 1950;
        for (int t = 0; t < 30; ++t) {
            year += gap(rng) ? 2 : 1;
            if (flip(rng)) state = 1 - state;
            csv << "C," << year << ',' << (miss(rng) ? std::string("NA") : std::to_string(state)) << '\n';
        }
        const PanelDataset d = parse(csv.str());
        const OnsetSeries y = code_onset(d);
        for (std::size_t i = 0; i < d.rows(); ++i) {
            if (y.y[i] != 1) continue;
            // An onset needs an observed zero in the previous calendar year.
            REQUIRE(i > 0);
            CHECK(d.year[i - 1] == d.year[i] - 1);
            CHECK(d.existence[i - 1] == 0.0);
            // Every later year of the same spell is censored.
            for (std::size_t k = i + 1; k < d.rows() && d.existence[k] == 1.0 && d.year[k] == d.year[k - 1] + 1; ++k)
                CHECK(!y.y[k].has_value());
        }

        // Existence rebuilt as the cumulative onset within each observed spell
        // reproduces the onset coding where y is observed.
        PanelDataset rebuilt = d;
        int cum = 0;
        for (std::size_t i = 0; i < d.rows(); ++i) {
            if (!y.y[i]) {
                rebuilt.existence[i] = std::nullopt;
                cum = 0;
                continue;
            }
            cum = std::max(cum, *y.y[i]);
            rebuilt.existence[i] = static_cast<double>(cum);
        }
        const OnsetSeries y2 = code_onset(rebuilt);
        for (std::size_t i = 0; i < d.rows(); ++i)
            if (y.y[i] && y2.y[i]) CHECK(*y.y[i] == *y2.y[i]);
        CHECK(y2.events() <= y.events());
    }
}

TEST_CASE("lag_covariates")
{
    const auto d = parse("country,year,dv_exists,x,b\n"
                         "A,1990,0,1,0\nA,1991,0,2,1\nA,1992,0,3,1\n"
                         "B,1990,0,4,1\nB,1992,0,5,0\n");
    const auto l = lag_covariates(d, 1);
    CHECK(col(l, "x") == OD{NA, 1.0, 2.0, NA, NA});
    CHECK(col(l, "b") == OD{NA, 0.0, 1.0, NA, NA});
    CHECK(l.column("b").kind == ColumnKind::binary);

    // lag(lag(x)) = lag2(x)
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution gap(0.1), miss(0.1);
    std::ostringstream csv;
    csv << "country,year,dv_exists,x\n";
    for (int c = 0; c < 10; ++c) {
        int year = 1950;
        for (int t = 0; t < 25; ++t) {
            year += gap(rng) ? 3 : 1;
            csv << 'C' << c << ',' << year << ",0,";
            if (!miss(rng)) csv << normal(rng);
            csv << '\n';
        }
    }
    const auto r = parse(csv.str());
    CHECK(col(lag_covariates(lag_covariates(r, 1), 1), "x") == col(lag_covariates(r, 2), "x"));
}

TEST_CASE("first_difference")
{
    const auto d = parse("country,year,dv_exists,x,b,m\n"
                         "A,1990,0,5,0,\nA,1991,0,7,1,\nA,1992,0,7,1,\nA,1994,0,9,0,\n");
    const auto f = first_difference(d, {"x", "m"});
    CHECK(col(f, "x_fd") == OD{NA, 2.0, 0.0, NA});
    CHECK(col(f, "m_fd") == OD{NA, NA, NA, NA});
    CHECK(f.has_column("x"));
    CHECK_THROWS_AS(first_difference(d, {"b"}), InvalidArgument);
}

TEST_CASE("years_since")
{
    auto ys = [](const std::string& values) {
        std::ostringstream csv;
        csv << "country,year,dv_exists,e\n";
        int year = 2000;
        for (char c : values) csv << "A," << year++ << ",0," << (c == '.' ? std::string("NA") : std::string(1, c)) << '\n';
        PanelSchema s;
        s.kinds["e"] = ColumnKind::binary;
        return col(years_since(parse(csv.str(), s), {"e"}), "e_ys");
    };
    CHECK(ys("0100") == OD{NA, 0.0, 1.0, 2.0});
    CHECK(ys("101") == OD{0.0, 1.0, 0.0});
    CHECK(ys("000") == OD{NA, NA, NA});
    // Missing cells do not stop the clock.
    CHECK(ys("1.0") == OD{0.0, 1.0, 2.0});

    const auto d = parse("country,year,dv_exists,e,x\nA,1,0,1,0.5\nA,2,0,0,1.5\nA,4,0,0,2.5\n");
    CHECK(col(years_since(d, {"e"}), "e_ys") == OD{0.0, 1.0, NA});
    CHECK_THROWS_AS(years_since(d, {"x"}), InvalidArgument);
}

TEST_CASE("years_since only decreases by resetting to zero")
{
    std::mt19937_64 rng(11);
    std::bernoulli_distribution ev(0.2), miss(0.1);
    std::ostringstream csv;
    csv << "country,year,dv_exists,e\n";
    for (int c = 0; c < 20; ++c)
        for (int t = 0; t < 30; ++t)
            csv << 'C' << c << ',' << 1950 + t << ",0," << (miss(rng) ? "NA" : (ev(rng) ? "1" : "0")) << '\n';
    PanelSchema s;
    s.kinds["e"] = ColumnKind::binary;
    const auto d = years_since(parse(csv.str(), s), {"e"});
    const auto v = col(d, "e_ys");
    for (std::size_t i = 1; i < d.rows(); ++i) {
        if (d.country[i] != d.country[i - 1] || !v[i] || !v[i - 1]) continue;
        CHECK((*v[i] == *v[i - 1] + 1.0 || *v[i] == 0.0));
    }
}

TEST_CASE("build_design keeps rows with observed outcome")
{
    const auto d = parse("country,year,dv_exists,x\nA,1960,0,1\nA,1961,0,\nA,1962,1,3\nA,1963,1,4\n");
    const auto onset = code_onset(d);
    CHECK_THROWS_AS(build_design(d, onset), InvalidArgument);
    const auto m = build_design(d, onset, {}, MissingPolicy::drop_rows);
    CHECK(m.n() == 2);
    CHECK(m.y[1] == 1.0);
    CHECK(m.panel_rows == std::vector<std::size_t>{0, 2});
    CHECK(m.term_names() == std::vector<std::string>{"x"});
}
