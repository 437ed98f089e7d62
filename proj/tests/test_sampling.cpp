#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "fedtd/env.hpp"
#include "fedtd/errors.hpp"
#include "fedtd/mdp.hpp"
#include "fedtd/sampling.hpp"

using namespace fedtd;

namespace {

Mdp single_action_mdp(const Matrix& p) {
    Mdp mdp;
    mdp.n_states = static_cast<int>(p.rows());
    mdp.n_actions = 1;
    mdp.transitions = {p};
    mdp.rewards = Matrix::Zero(mdp.n_states, 1);
    for (int s = 0; s < mdp.n_states; ++s) mdp.rewards(s, 0) = 0.1 * s;
    return mdp;
}

Policy trivial_policy(int n_states) {
    Policy policy;
    policy.probs = Matrix::Ones(n_states, 1);
    return policy;
}

InducedChain as_chain(const Matrix& p) {
    return InducedChain{p, Vector::Zero(p.rows())};
}

}  // namespace

TEST_CASE("categorical table maps uniforms through the cdf") {
    Matrix probs(1, 2);
    probs << 0.3, 0.7;
    CategoricalTable table(probs);
    CHECK(table.sample(0, 0.0) == 0);
    CHECK(table.sample(0, 0.2999) == 0);
    CHECK(table.sample(0, 0.3) == 1);
    CHECK(table.sample(0, 0.999999) == 1);
}

TEST_CASE("categorical table on a deterministic row always returns its support") {
    Matrix probs(2, 3);
    probs << 0.0, 1.0, 0.0, 1.0, 0.0, 0.0;
    CategoricalTable table(probs);
    for (double u : {0.0, 0.25, 0.5, 0.9999}) {
        CHECK(table.sample(0, u) == 1);
        CHECK(table.sample(1, u) == 0);
    }
}

TEST_CASE("categorical table never returns an out-of-range index") {
    // Rows whose floating-point sum falls marginally below 1.
    Matrix probs(1, 4);
    probs << 0.1, 0.2, 0.3, 0.4;
    CategoricalTable table(probs);
    CHECK(table.sample(0, 1.0 - 1e-16) == 3);
}

TEST_CASE("markov streams are reproducible and continuous") {
    Matrix p(3, 3);
    p << 0.2, 0.5, 0.3, 0.4, 0.1, 0.5, 0.3, 0.3, 0.4;
    Mdp mdp = single_action_mdp(p);
    Policy policy = trivial_policy(3);
    AgentTables tables(mdp, policy);

    AgentStream a(tables, SamplingMode::markovian, 7, 0, 0);
    AgentStream b(tables, SamplingMode::markovian, 7, 0, 0);
    int prev_next = a.current_state();
    CHECK(a.current_state() == b.current_state());
    for (int t = 0; t < 5000; ++t) {
        Transition ta = a.step_markov();
        Transition tb = b.step_markov();
        CHECK(ta.s == tb.s);
        CHECK(ta.a == tb.a);
        CHECK(ta.s_next == tb.s_next);
        CHECK(ta.reward == tb.reward);
        CHECK(ta.s == prev_next);
        CHECK(ta.reward == mdp.rewards(ta.s, ta.a));
        prev_next = ta.s_next;
    }
}

TEST_CASE("distinct agents and runs get distinct streams") {
    Matrix p(3, 3);
    p << 0.2, 0.5, 0.3, 0.4, 0.1, 0.5, 0.3, 0.3, 0.4;
    Mdp mdp = single_action_mdp(p);
    AgentTables tables(mdp, trivial_policy(3));

    auto states = [&](std::uint64_t run, int agent) {
        AgentStream s(tables, SamplingMode::markovian, 7, run, agent);
        std::vector<int> out;
        for (int t = 0; t < 64; ++t) out.push_back(s.step_markov().s_next);
        return out;
    };
    CHECK(states(0, 0) != states(0, 1));
    CHECK(states(0, 0) != states(1, 0));
    CHECK(states(0, 0) == states(0, 0));
}

TEST_CASE("markov state frequencies approach the stationary distribution") {
    Matrix p(2, 2);
    p << 0.9, 0.1, 0.5, 0.5;  // stationary (5/6, 1/6)
    Mdp mdp = single_action_mdp(p);
    AgentTables tables(mdp, trivial_policy(2));
    AgentStream stream(tables, SamplingMode::markovian, 11, 0, 0);

    const int n = 1000000;
    int count0 = 0;
    for (int t = 0; t < n; ++t)
        if (stream.step_markov().s == 0) ++count0;
    double freq = static_cast<double>(count0) / n;
    // Binomial sigma inflated by the chain's autocorrelation factor.
    double sigma = std::sqrt((5.0 / 6.0) * (1.0 / 6.0) / n) * 2.0;
    CHECK(std::abs(freq - 5.0 / 6.0) <= 3.0 * sigma);
}

TEST_CASE("iid draws match the marginal and forget the past") {
    Matrix p(3, 3);
    p << 0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.2, 0.7;
    Mdp mdp = single_action_mdp(p);
    AgentTables tables(mdp, trivial_policy(3));
    StationaryDistribution d_mu = stationary_distribution(as_chain(p));

    AgentStream stream(tables, SamplingMode::iid, 13, 0, 0);
    const int n = 200000;
    std::vector<int> counts(3, 0);
    std::vector<double> s_seq(n);
    for (int t = 0; t < n; ++t) {
        Transition tr = stream.step_iid(d_mu);
        ++counts[tr.s];
        s_seq[t] = tr.s;
    }
    for (int s = 0; s < 3; ++s) {
        double freq = static_cast<double>(counts[s]) / n;
        double sigma = std::sqrt(d_mu.d(s) * (1.0 - d_mu.d(s)) / n);
        CHECK(std::abs(freq - d_mu.d(s)) <= 4.0 * sigma);
    }
    // Lag-1 autocorrelation of the state sequence is 0 for iid draws.
    double mean = 0.0;
    for (double v : s_seq) mean += v;
    mean /= n;
    double num = 0.0, den = 0.0;
    for (int t = 0; t + 1 < n; ++t)
        num += (s_seq[t] - mean) * (s_seq[t + 1] - mean);
    for (double v : s_seq) den += (v - mean) * (v - mean);
    CHECK(std::abs(num / den) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("iid next-states follow the transition row") {
    Matrix p(2, 2);
    p << 0.9, 0.1, 0.5, 0.5;
    Mdp mdp = single_action_mdp(p);
    AgentTables tables(mdp, trivial_policy(2));
    StationaryDistribution d_mu = stationary_distribution(as_chain(p));
    AgentStream stream(tables, SamplingMode::iid, 17, 0, 0);

    int from0 = 0, from0_to0 = 0;
    for (int t = 0; t < 200000; ++t) {
        Transition tr = stream.step_iid(d_mu);
        if (tr.s == 0) {
            ++from0;
            if (tr.s_next == 0) ++from0_to0;
        }
    }
    double cond = static_cast<double>(from0_to0) / from0;
    double sigma = std::sqrt(0.9 * 0.1 / from0);
    CHECK(std::abs(cond - 0.9) <= 4.0 * sigma);
}

TEST_CASE("streams reject the wrong sampling mode") {
    Matrix p(2, 2);
    p << 0.5, 0.5, 0.5, 0.5;
    Mdp mdp = single_action_mdp(p);
    AgentTables tables(mdp, trivial_policy(2));
    StationaryDistribution d_mu = stationary_distribution(as_chain(p));

    AgentStream markov(tables, SamplingMode::markovian, 1, 0, 0);
    CHECK_THROWS_AS(markov.step_iid(d_mu), ProtocolError);
    AgentStream iid(tables, SamplingMode::iid, 1, 0, 0);
    CHECK_THROWS_AS(iid.step_markov(), ProtocolError);
}

TEST_CASE("mixing estimate recovers the spectral factor of a symmetric chain") {
    // P = [[0.7,0.3],[0.3,0.7]] has TV(t) = 0.5 * 0.4^t exactly.
    Matrix p(2, 2);
    p << 0.7, 0.3, 0.3, 0.7;
    InducedChain chain{p, Vector::Zero(2)};
    MixingEstimate est = estimate_mixing(chain, 20);
    CHECK(!est.one_step);
    CHECK(est.alpha_hat == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(est.c_e_hat == doctest::Approx(0.5).epsilon(1e-6));
    // Matrix powers lose relative precision as the TV distance shrinks, so
    // the log-space residual is small but not at machine precision.
    CHECK(est.fit_residual <= 1e-6);
    CHECK(est.horizon == 20);
}

TEST_CASE("rank-one chains mix in a single step") {
    Matrix p(3, 3);
    for (int s = 0; s < 3; ++s) {
        p(s, 0) = 0.5;
        p(s, 1) = 0.3;
        p(s, 2) = 0.2;
    }
    InducedChain chain{p, Vector::Zero(3)};
    MixingEstimate est = estimate_mixing(chain, 15);
    CHECK(est.one_step);
    CHECK(est.alpha_hat == 0.0);
}

TEST_CASE("mixing estimate rejects short horizons and non-mixing chains") {
    Matrix p(2, 2);
    p << 0.7, 0.3, 0.3, 0.7;
    InducedChain chain{p, Vector::Zero(2)};
    CHECK_THROWS_AS(estimate_mixing(chain, 5), ConfigError);

    Matrix swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;  // TV stays at 1/2 forever
    InducedChain periodic{swap, Vector::Zero(2)};
    CHECK_THROWS_AS(estimate_mixing(periodic, 20), NumericalError);
}
