#include "rem/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "rem/serialize_util.hpp"
#include "rem/stats.hpp"

namespace rem {

ExactStreamResult fit_exact_stream(const EventSequence& full, const std::vector<int>& boundaries,
                                   const std::vector<StatisticSpec>& specs,
                                   const ActorAttributes& attrs, ModelKind kind,
                                   const FitOptions& opts) {
    require_valid(full);
    if (boundaries.empty()) throw std::invalid_argument("no prefix boundaries given");
    for (std::size_t i = 0; i < boundaries.size(); ++i) {
        if (boundaries[i] < 1 || boundaries[i] > full.n_events())
            throw std::invalid_argument("prefix boundary out of range");
        if (i > 0 && boundaries[i] <= boundaries[i - 1])
            throw std::invalid_argument("prefix boundaries must be strictly increasing");
    }

    const RiskSet risk(full.n_actors);
    const int p = static_cast<int>(specs.size());
    const int mmax = boundaries.back();
    const std::size_t need = (static_cast<std::size_t>(mmax) + 1) * static_cast<std::size_t>(risk.size()) *
                             static_cast<std::size_t>(p) * sizeof(double);
    if (need > opts.materialize_budget)
        throw NumericalError("exact refit needs about " + std::to_string(need) +
                             " bytes of covariates, over the budget of " +
                             std::to_string(opts.materialize_budget));

    ExactStreamResult out;
    out.spec_hash = spec_hash(model_kind_name(kind), full.n_actors, specs);
    for (int b : boundaries) {
        EventSequence prefix;
        prefix.n_actors = full.n_actors;
        prefix.onset = full.onset;
        prefix.events.assign(full.events.begin(), full.events.begin() + b);
        prefix.end_time = prefix.events.back().time;
        FitProfile prof;
        ExactStep step;
        step.prefix_events = b;
        step.fit = fit_rem(prefix, specs, attrs, kind, opts, &prof);
        step.wall_seconds = prof.wall_seconds;
        step.peak_bytes = prof.peak_slice_bytes;
        out.steps.push_back(std::move(step));
    }
    return out;
}

namespace {
constexpr double kZ975 = 1.959963984540054;
}

ComparisonReport compare(const ExactStreamResult& exact, const std::vector<PooledStep>& pooled,
                         const std::vector<std::string>& effect_names) {
    if (exact.steps.empty() || pooled.empty())
        throw std::invalid_argument("nothing to compare");
    for (const auto& ps : pooled)
        if (ps.spec_hash != exact.spec_hash)
            throw std::invalid_argument("comparison requires an identical model signature on both paths");

    ComparisonReport rep;
    rep.spec_hash = exact.spec_hash;
    rep.effect_names = effect_names;
    double pooled_cum_seconds = 0.0;
    std::size_t pooled_idx = 0;
    for (const auto& ex : exact.steps) {
        // advance through pooled snapshots up to this boundary, accumulating time
        const PooledStep* match = nullptr;
        while (pooled_idx < pooled.size() && pooled[pooled_idx].prefix_events <= ex.prefix_events) {
            pooled_cum_seconds += pooled[pooled_idx].wall_seconds;
            if (pooled[pooled_idx].prefix_events == ex.prefix_events) match = &pooled[pooled_idx];
            ++pooled_idx;
        }
        if (!match)
            throw std::invalid_argument("misaligned boundaries: no pooled snapshot at prefix " +
                                        std::to_string(ex.prefix_events));
        const int p = static_cast<int>(match->mean.size());
        if (ex.fit.beta.size() != p)
            throw std::invalid_argument("effect count differs between the paths");

        ComparisonStep cs;
        cs.prefix_events = ex.prefix_events;
        cs.exact_seconds = ex.wall_seconds;
        cs.pooled_seconds = pooled_cum_seconds;
        cs.exact_bytes = ex.peak_bytes;
        cs.pooled_bytes = match->state_bytes;
        for (int j = 0; j < p; ++j) {
            EffectComparison ec;
            ec.effect = j < static_cast<int>(effect_names.size())
                            ? effect_names[static_cast<std::size_t>(j)]
                            : "effect" + std::to_string(j);
            ec.exact = ex.fit.beta[j];
            ec.pooled = match->mean[j];
            ec.abs_diff = std::abs(ec.exact - ec.pooled);
            ec.rel_diff = ec.abs_diff / std::max(std::abs(ec.exact), 1e-12);
            const double se_exact = std::sqrt(std::max(0.0, ex.fit.covariance(j, j)));
            ec.pooled_se = std::sqrt(std::max(0.0, match->covariance(j, j)));
            ec.exact_width = 2.0 * kZ975 * se_exact;
            ec.pooled_width = 2.0 * kZ975 * ec.pooled_se;
            ec.flagged = ec.pooled_se > 0.0 && ec.abs_diff > 2.0 * ec.pooled_se;
            cs.effects.push_back(std::move(ec));
        }
        rep.steps.push_back(std::move(cs));
    }
    return rep;
}

nlohmann::json ComparisonReport::to_json() const {
    nlohmann::json j;
    j["spec_hash"] = spec_hash;
    j["effects"] = effect_names;
    j["steps"] = nlohmann::json::array();
    for (const auto& s : steps) {
        nlohmann::json sj;
        sj["prefix_events"] = s.prefix_events;
        sj["exact_seconds"] = s.exact_seconds;
        sj["pooled_seconds"] = s.pooled_seconds;
        sj["exact_bytes"] = s.exact_bytes;
        sj["pooled_bytes"] = s.pooled_bytes;
        sj["effects"] = nlohmann::json::array();
        for (const auto& e : s.effects) {
            nlohmann::json ej;
            ej["effect"] = e.effect;
            ej["exact"] = e.exact;
            ej["pooled"] = e.pooled;
            ej["abs_diff"] = e.abs_diff;
            ej["rel_diff"] = e.rel_diff;
            ej["exact_width"] = e.exact_width;
            ej["pooled_width"] = e.pooled_width;
            ej["pooled_se"] = e.pooled_se;
            ej["flagged"] = e.flagged;
            sj["effects"].push_back(std::move(ej));
        }
        j["steps"].push_back(std::move(sj));
    }
    return j;
}

ComparisonReport ComparisonReport::from_json(const nlohmann::json& j) {
    ComparisonReport rep;
    rep.spec_hash = j.at("spec_hash").get<std::string>();
    rep.effect_names = j.at("effects").get<std::vector<std::string>>();
    for (const auto& sj : j.at("steps")) {
        ComparisonStep s;
        s.prefix_events = sj.at("prefix_events").get<int>();
        s.exact_seconds = sj.at("exact_seconds").get<double>();
        s.pooled_seconds = sj.at("pooled_seconds").get<double>();
        s.exact_bytes = sj.at("exact_bytes").get<std::size_t>();
        s.pooled_bytes = sj.at("pooled_bytes").get<std::size_t>();
        for (const auto& ej : sj.at("effects")) {
            EffectComparison e;
            e.effect = ej.at("effect").get<std::string>();
            e.exact = ej.at("exact").get<double>();
            e.pooled = ej.at("pooled").get<double>();
            e.abs_diff = ej.at("abs_diff").get<double>();
            e.rel_diff = ej.at("rel_diff").get<double>();
            e.exact_width = ej.at("exact_width").get<double>();
            e.pooled_width = ej.at("pooled_width").get<double>();
            e.pooled_se = ej.at("pooled_se").get<double>();
            e.flagged = ej.at("flagged").get<bool>();
            s.effects.push_back(std::move(e));
        }
        rep.steps.push_back(std::move(s));
    }
    return rep;
}

void ComparisonReport::write_table(std::ostream& out) const {
    for (const auto& s : steps) {
        out << "prefix " << s.prefix_events << "  (exact " << s.exact_seconds << " s, pooled "
            << s.pooled_seconds << " s cumulative)\n";
        out << "  effect                        exact      pooled     |diff|     flag\n";
        char line[160];
        for (const auto& e : s.effects) {
            std::snprintf(line, sizeof line, "  %-28s %10.4f %10.4f %10.4f %s\n", e.effect.c_str(),
                          e.exact, e.pooled, e.abs_diff, e.flagged ? "  >2se" : "");
            out << line;
        }
    }
}

}  // namespace rem
