#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "growfrag/errors.hpp"
#include "growfrag/model.hpp"
#include "growfrag/parallel.hpp"
#include "growfrag/rng.hpp"

namespace growfrag {

/// Outcome of one individual's competing clocks: division sampled by
/// thinning the constant-rate bbar candidate stream against b(A_t(x)),
/// death by an independent exponential.
struct FirstEvent {
    double time = 0.0;           // relative to the individual's birth
    bool is_division = false;
    double alpha = 0.0;          // division fraction, 0 for death
    double mass_at_event = 0.0;  // mass when the event fires (division only)
};

/// Draw a division fraction from the model kernel.
inline double sample_fraction(const ModelSpec& spec, CounterRng& rng) {
    if (const auto* beta = std::get_if<SymmetricBetaKernel>(&spec.kernel_law()))
        return rng.beta_symmetric(beta->beta);
    const auto& inv = spec.kernel_inverse_cdf();
    if (!inv) throw numerical_error("sample_fraction: kernel has no sampler");
    const double a = inv->eval_clamped(rng.uniform());
    return std::clamp(a, 1e-12, 1.0 - 1e-12);
}

/// Exact first-event sampling for one individual of mass x. Candidate
/// division times arrive at rate bbar and are accepted with probability
/// b(A_t(x))/bbar; the death clock runs independently at rate D. The
/// earlier accepted clock wins.
inline FirstEvent first_event(const ModelSpec& spec, double x, CounterRng& rng) {
    const double bbar = spec.division_rate_bound();
    const double death_rate = spec.death_rate();
    if (bbar <= 0.0 && death_rate <= 0.0)
        throw domain_error("first_event: no event possible (b == 0 and D == 0)");
    if (!(x > 0.0 && x < spec.max_mass()))
        throw domain_error("first_event: mass must lie strictly inside (0, M)");

    const double t_death = rng.exponential(death_rate);
    double t = 0.0;
    double state[2] = {x, 0.0};
    for (std::uint64_t guard = 0; bbar > 0.0; ++guard) {
        if (guard > 10000000)
            throw numerical_error("first_event: thinning failed to terminate");
        const double t_cand = t + rng.exponential(bbar);
        if (t_cand >= t_death) break;
        spec.advance(state, t, t_cand);
        t = t_cand;
        if (rng.uniform() * bbar <= spec.division_rate(state[0])) {
            FirstEvent ev;
            ev.time = t_cand;
            ev.is_division = true;
            ev.alpha = sample_fraction(spec, rng);
            ev.mass_at_event = state[0];
            return ev;
        }
    }
    if (std::isinf(t_death))
        throw numerical_error("first_event: no finite event sampled");
    FirstEvent ev;
    ev.time = t_death;
    ev.is_division = false;
    return ev;
}

struct EventRecord {
    double time = 0.0;
    bool is_division = false;
    double alpha = 0.0;
    double mass_at_event = 0.0;      // parent mass when dividing
    double child_masses[2] = {0.0, 0.0};
    std::uint64_t parent_id = 0;
    std::uint64_t child_ids[2] = {0, 0};
};

struct SimulationCaps {
    std::size_t max_population = 500;
    std::size_t max_events = 2000000;
    bool survival_proxy = true;  // reaching max_population counts as survival
};

struct SimulationSummary {
    bool survived = false;
    std::optional<double> extinction_time;
    bool proxy_triggered = false;  // population cap reached with proxy enabled
    bool truncated = false;        // cap reached without proxy; result partial
    std::uint64_t seed = 0;
    std::size_t replica_index = 0;
    std::size_t event_count = 0;
    std::size_t final_population = 0;
    double coverage_time = 0.0;    // samples beyond this were never simulated
    std::vector<double> sample_times;
    std::vector<std::size_t> population_counts;       // per sample time
    std::vector<std::vector<double>> weighted;        // [weight][sample time]
    std::vector<EventRecord> events;                  // filled when recording
};

using WeightFunction = std::function<double(double)>;

/// Exact event-driven branching simulation from a single individual.
/// Lineages never interact, so each individual carries its own
/// counter-based stream (children derive theirs from the parent's), and the
/// realized event log is a pure function of (spec, seed, replica_index).
inline SimulationSummary simulate(const ModelSpec& spec, double x0, double horizon,
                                  const SimulationCaps& caps, std::uint64_t seed,
                                  std::size_t replica_index = 0,
                                  const std::vector<double>& sample_times = {},
                                  const std::vector<WeightFunction>& weights = {},
                                  bool record_events = false) {
    if (!(x0 > 0.0 && x0 < spec.max_mass()))
        throw domain_error("simulate: x0 must lie strictly inside (0, M)");
    if (horizon < 0.0) throw domain_error("simulate: horizon must be >= 0");
    if (caps.max_population == 0 || caps.max_events == 0)
        throw domain_error("simulate: caps must be positive");

    struct Individual {
        double birth_mass;
        double birth_time;
        CounterRng rng;
    };
    struct Scheduled {
        double time;
        std::uint64_t id;
        FirstEvent event;
        bool operator>(const Scheduled& o) const {
            return time != o.time ? time > o.time : id > o.id;
        }
    };

    SimulationSummary out;
    out.seed = seed;
    out.replica_index = replica_index;
    out.sample_times = sample_times;
    out.population_counts.assign(sample_times.size(), 0);
    out.weighted.assign(weights.size(), std::vector<double>(sample_times.size(), 0.0));

    std::map<std::uint64_t, Individual> alive;
    std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<Scheduled>> queue;
    std::uint64_t next_id = 1;

    auto spawn = [&](double mass, double when, const StreamKey& key) {
        const std::uint64_t id = next_id++;
        Individual ind{mass, when, CounterRng(key)};
        FirstEvent ev = first_event(spec, mass, ind.rng);
        queue.push(Scheduled{when + ev.time, id, ev});
        alive.emplace(id, std::move(ind));
        return id;
    };

    spawn(x0, 0.0, StreamKey::root(seed).derive(replica_index));

    std::size_t sample_ptr = 0;
    auto emit_samples_until = [&](double limit) {
        while (sample_ptr < sample_times.size() && sample_times[sample_ptr] <= limit &&
               sample_times[sample_ptr] <= horizon) {
            const double ts = sample_times[sample_ptr];
            out.population_counts[sample_ptr] = alive.size();
            for (std::size_t w = 0; w < weights.size(); ++w) {
                double acc = 0.0;
                for (const auto& [id, ind] : alive)
                    acc += weights[w](spec.flow(ind.birth_mass, ts - ind.birth_time));
                out.weighted[w][sample_ptr] = acc;
            }
            ++sample_ptr;
        }
    };

    double last_event_time = 0.0;
    out.coverage_time = horizon;
    for (;;) {
        if (queue.empty()) {
            // Extinct: every remaining sample sees an empty population.
            emit_samples_until(horizon);
            out.extinction_time = last_event_time;
            out.survived = false;
            break;
        }
        const Scheduled next = queue.top();
        if (next.time > horizon) {
            emit_samples_until(horizon);
            out.survived = !alive.empty();
            break;
        }
        emit_samples_until(next.time);
        queue.pop();

        const auto it = alive.find(next.id);
        const StreamKey parent_key = it->second.rng.key();
        alive.erase(it);
        last_event_time = next.time;
        ++out.event_count;

        EventRecord rec;
        rec.time = next.time;
        rec.parent_id = next.id;
        rec.is_division = next.event.is_division;
        if (next.event.is_division) {
            const double m = next.event.mass_at_event;
            const double a = next.event.alpha;
            rec.alpha = a;
            // Children split the parent mass exactly: subtracting the larger
            // piece from m is exact (Sterbenz), the smaller piece follows.
            double m_left, m_right;
            if (a >= 0.5) {
                m_left = a * m;
                m_right = m - m_left;
            } else {
                m_right = (1.0 - a) * m;
                m_left = m - m_right;
            }
            rec.mass_at_event = m;
            rec.child_masses[0] = m_left;
            rec.child_masses[1] = m_right;
            rec.child_ids[0] = spawn(m_left, next.time, parent_key.derive(0));
            rec.child_ids[1] = spawn(m_right, next.time, parent_key.derive(1));
        }
        if (record_events) out.events.push_back(rec);

        if (alive.size() >= caps.max_population) {
            out.coverage_time = next.time;
            if (caps.survival_proxy) {
                out.proxy_triggered = true;
                out.survived = true;
            } else {
                out.truncated = true;
            }
            break;
        }
        if (out.event_count >= caps.max_events) {
            out.coverage_time = next.time;
            out.truncated = true;
            out.survived = !alive.empty();
            break;
        }
    }
    out.final_population = alive.size();
    return out;
}

struct SurvivalEstimate {
    double p_surv = 0.0;
    double ci_halfwidth = 0.0;
    std::size_t replicas = 0;
    std::size_t survived = 0;
    std::size_t truncated = 0;
};

/// Monte Carlo survival frequency with a Wald interval. Replicas are pure
/// functions of (spec, seed, index); the reduction runs in index order, so
/// the result is identical for any worker count.
inline SurvivalEstimate estimate_survival(const ModelSpec& spec, double x0,
                                          double horizon, const SimulationCaps& caps,
                                          std::size_t replicas, std::uint64_t seed,
                                          std::size_t workers = 1) {
    if (replicas < 1) throw domain_error("estimate_survival: need replicas >= 1");
    std::vector<unsigned char> survived(replicas, 0), truncated(replicas, 0);
    parallel_for(replicas, workers, [&](std::size_t r) {
        const SimulationSummary s = simulate(spec, x0, horizon, caps, seed, r);
        survived[r] = s.survived ? 1 : 0;
        truncated[r] = s.truncated ? 1 : 0;
    });
    SurvivalEstimate est;
    est.replicas = replicas;
    for (std::size_t r = 0; r < replicas; ++r) {
        est.survived += survived[r];
        est.truncated += truncated[r];
    }
    est.p_surv = static_cast<double>(est.survived) / static_cast<double>(replicas);
    est.ci_halfwidth =
        1.96 * std::sqrt(est.p_surv * (1.0 - est.p_surv) / static_cast<double>(replicas));
    return est;
}

struct TimePointStat {
    double time = 0.0;
    double mean = 0.0;
    double ci_halfwidth = 0.0;
    double stddev = 0.0;
};

/// Per-time Monte Carlo estimate of the weighted population sum
/// E[sum_i f(X_t^i)] from x0. Uses an uncapped population by default so
/// late samples are never censored.
inline std::vector<TimePointStat> weighted_expectation(
    const ModelSpec& spec, double x0, const WeightFunction& f,
    const std::vector<double>& times, std::size_t replicas, std::uint64_t seed,
    SimulationCaps caps = {std::numeric_limits<std::size_t>::max() / 2, 20000000, true},
    std::size_t workers = 1) {
    if (replicas < 1) throw domain_error("weighted_expectation: need replicas >= 1");
    if (times.empty()) return {};
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const double horizon = sorted.back();
    std::vector<std::vector<double>> rows(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
        const SimulationSummary s =
            simulate(spec, x0, horizon, caps, seed, r, sorted, {f});
        if (s.truncated)
            throw numerical_error("weighted_expectation: replica truncated by caps");
        rows[r] = s.weighted[0];
    });
    std::vector<TimePointStat> out(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        double mean = 0.0;
        for (std::size_t r = 0; r < replicas; ++r) mean += rows[r][k];
        mean /= static_cast<double>(replicas);
        double var = 0.0;
        for (std::size_t r = 0; r < replicas; ++r) {
            const double d = rows[r][k] - mean;
            var += d * d;
        }
        var = replicas > 1 ? var / static_cast<double>(replicas - 1) : 0.0;
        const double sd = std::sqrt(var);
        out[k] = {sorted[k], mean, 1.96 * sd / std::sqrt(static_cast<double>(replicas)),
                  sd};
    }
    return out;
}

} // namespace growfrag
