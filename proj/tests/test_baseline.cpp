#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rem/baseline.hpp"
#include "rem/rng.hpp"
#include "rem/simulate.hpp"
#include "rem/stream.hpp"

using namespace rem;

namespace {

SimDesign small_design(std::uint64_t seed, int m = 240) {
    SimDesign d;
    d.n_actors = 6;
    d.n_events = m;
    d.specs.resize(3);
    d.specs[0].kind = StatKind::intercept;
    d.specs[1].kind = StatKind::inertia;
    d.specs[1].scaling = Scaling::standardized;
    d.specs[2].kind = StatKind::reciprocity;
    d.specs[2].scaling = Scaling::standardized;
    d.beta_true = Eigen::VectorXd(3);
    d.beta_true << -2.5, 0.3, 0.2;
    d.seed = seed;
    return d;
}

std::vector<std::string> names_of(const SimDesign& d) {
    std::vector<std::string> names;
    for (const auto& sp : d.specs) names.push_back(sp.name(d.specs));
    return names;
}

// Drive a carried-history stream over equal batches, capturing one pooled
// snapshot per batch boundary.
std::vector<PooledStep> pooled_snapshots(const EventSequence& seq, const SimDesign& d,
                                         int batch) {
    const std::string hash = spec_hash("temporal", d.n_actors, d.specs);
    StreamOptions opts;
    opts.min_batch = batch;
    opts.carry_history = true;
    StreamSession session(
        init_stream(PoolMode::frequentist, static_cast<int>(d.specs.size()), std::nullopt, hash),
        d.specs, d.attributes, ModelKind::temporal, d.n_actors, opts);
    std::vector<PooledStep> steps;
    for (int start = 0; start < seq.n_events(); start += batch) {
        const int stop = std::min(seq.n_events(), start + batch);
        std::vector<Event> events(seq.events.begin() + start, seq.events.begin() + stop);
        const auto fit = session.push(events);
        REQUIRE(fit.has_value());
        PooledStep ps;
        ps.prefix_events = stop;
        ps.mean = session.state().mean;
        ps.covariance = session.state().covariance;
        ps.wall_seconds = 0.001;
        ps.state_bytes = session.state().memory_footprint_bytes();
        ps.spec_hash = hash;
        steps.push_back(ps);
    }
    return steps;
}

}  // namespace

TEST_SUITE_BEGIN("baseline");

TEST_CASE("a single full-length boundary reproduces the ordinary fit") {
    const SimDesign d = small_design(3001);
    const EventSequence seq = simulate_sequence(d);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {seq.n_events()}, d.specs, d.attributes, ModelKind::temporal);
    REQUIRE(ex.steps.size() == 1);
    const FitResult whole = fit_rem(seq, d.specs, d.attributes, ModelKind::temporal);
    CHECK(ex.steps[0].fit.beta == whole.beta);
    CHECK(ex.steps[0].fit.loglik == whole.loglik);
    CHECK(ex.steps[0].prefix_events == seq.n_events());
    CHECK(ex.steps[0].wall_seconds > 0.0);
    CHECK(ex.steps[0].peak_bytes > 0);
    CHECK(ex.spec_hash == spec_hash("temporal", d.n_actors, d.specs));
}

TEST_CASE("prefix refits use growing covariate storage") {
    const SimDesign d = small_design(3002);
    const EventSequence seq = simulate_sequence(d);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {60, 120, 240}, d.specs, d.attributes, ModelKind::temporal);
    REQUIRE(ex.steps.size() == 3);
    CHECK(ex.steps[0].peak_bytes < ex.steps[1].peak_bytes);
    CHECK(ex.steps[1].peak_bytes < ex.steps[2].peak_bytes);
    // Each prefix fit agrees with an independent fit of the truncation.
    EventSequence prefix = seq;
    prefix.events.resize(120);
    prefix.end_time = prefix.events.back().time;
    const FitResult direct = fit_rem(prefix, d.specs, d.attributes, ModelKind::temporal);
    CHECK((ex.steps[1].fit.beta - direct.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("boundary lists are validated") {
    const SimDesign d = small_design(3003);
    const EventSequence seq = simulate_sequence(d);
    CHECK_THROWS_AS(
        fit_exact_stream(seq, {}, d.specs, d.attributes, ModelKind::temporal),
        std::invalid_argument);
    CHECK_THROWS_AS(
        fit_exact_stream(seq, {50, 50}, d.specs, d.attributes, ModelKind::temporal),
        std::invalid_argument);
    CHECK_THROWS_AS(
        fit_exact_stream(seq, {0, 50}, d.specs, d.attributes, ModelKind::temporal),
        std::invalid_argument);
    CHECK_THROWS_AS(
        fit_exact_stream(seq, {50, 10000}, d.specs, d.attributes, ModelKind::temporal),
        std::invalid_argument);
}

TEST_CASE("the exact path refuses prefixes beyond its memory budget") {
    const SimDesign d = small_design(3004);
    const EventSequence seq = simulate_sequence(d);
    FitOptions opts;
    opts.materialize_budget = 1024;  // far below 240 events * 30 dyads * 3 cols
    CHECK_THROWS_WITH_AS(
        fit_exact_stream(seq, {240}, d.specs, d.attributes, ModelKind::temporal, opts),
        doctest::Contains("budget"), NumericalError);
}

TEST_CASE("comparing a stream against the exact fits lines up by prefix") {
    const SimDesign d = small_design(3005);
    const EventSequence seq = simulate_sequence(d);
    const std::vector<PooledStep> pooled = pooled_snapshots(seq, d, 60);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {120, 240}, d.specs, d.attributes, ModelKind::temporal);

    const ComparisonReport report = compare(ex, pooled, names_of(d));
    REQUIRE(report.steps.size() == 2);
    CHECK(report.steps[0].prefix_events == 120);
    CHECK(report.steps[1].prefix_events == 240);
    REQUIRE(report.steps[0].effects.size() == 3);
    CHECK(report.effect_names == names_of(d));

    for (const ComparisonStep& step : report.steps) {
        CHECK(step.pooled_seconds > 0.0);
        CHECK(step.exact_bytes > step.pooled_bytes);  // whole-prefix covariates vs P^2 state
        for (const EffectComparison& e : step.effects) {
            CHECK(e.abs_diff == doctest::Approx(std::abs(e.exact - e.pooled)).epsilon(1e-12));
            CHECK(e.pooled_width == doctest::Approx(2 * 1.959963984540054 * e.pooled_se)
                                        .epsilon(1e-12));
            // On this well-behaved stream pooling must track the exact path.
            CHECK_FALSE(e.flagged);
        }
    }
    // Cumulative pooled time is nondecreasing across prefixes.
    CHECK(report.steps[1].pooled_seconds >= report.steps[0].pooled_seconds);
}

TEST_CASE("pooled estimates far from the exact answer are flagged") {
    const SimDesign d = small_design(3006);
    const EventSequence seq = simulate_sequence(d);
    std::vector<PooledStep> pooled = pooled_snapshots(seq, d, 120);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {120, 240}, d.specs, d.attributes, ModelKind::temporal);

    pooled[1].mean[0] += 1.0;  // sabotage one coordinate by many SEs
    const ComparisonReport report = compare(ex, pooled, names_of(d));
    CHECK(report.steps[1].effects[0].flagged);
    CHECK_FALSE(report.steps[0].effects[0].flagged);
}

TEST_CASE("misaligned or foreign snapshots are rejected") {
    const SimDesign d = small_design(3007);
    const EventSequence seq = simulate_sequence(d);
    const std::vector<PooledStep> pooled = pooled_snapshots(seq, d, 60);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {90}, d.specs, d.attributes, ModelKind::temporal);
    CHECK_THROWS_WITH_AS(compare(ex, pooled, names_of(d)), doctest::Contains("misaligned"),
                         std::invalid_argument);

    std::vector<PooledStep> renamed = pooled;
    for (PooledStep& p : renamed) p.spec_hash = "deadbeef";
    const ExactStreamResult ex2 =
        fit_exact_stream(seq, {120}, d.specs, d.attributes, ModelKind::temporal);
    CHECK_THROWS_WITH_AS(compare(ex2, renamed, names_of(d)),
                         doctest::Contains("model signature"), std::invalid_argument);
}

TEST_CASE("comparison reports round-trip through JSON and print a table") {
    const SimDesign d = small_design(3008);
    const EventSequence seq = simulate_sequence(d);
    const std::vector<PooledStep> pooled = pooled_snapshots(seq, d, 120);
    const ExactStreamResult ex =
        fit_exact_stream(seq, {240}, d.specs, d.attributes, ModelKind::temporal);
    const ComparisonReport report = compare(ex, pooled, names_of(d));

    const ComparisonReport back = ComparisonReport::from_json(report.to_json());
    CHECK(back.spec_hash == report.spec_hash);
    CHECK(back.effect_names == report.effect_names);
    REQUIRE(back.steps.size() == report.steps.size());
    CHECK(back.steps[0].prefix_events == report.steps[0].prefix_events);
    CHECK(back.steps[0].effects[1].exact == report.steps[0].effects[1].exact);
    CHECK(back.steps[0].effects[1].pooled_se == report.steps[0].effects[1].pooled_se);
    CHECK(back.to_json() == report.to_json());

    std::ostringstream table;
    report.write_table(table);
    const std::string text = table.str();
    CHECK(text.find("prefix") != std::string::npos);
    CHECK(text.find("inertia") != std::string::npos);
    CHECK(text.find("exact") != std::string::npos);
    CHECK(text.find("pooled") != std::string::npos);
}

TEST_SUITE_END();
