#include "fedtd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedtd/errors.hpp"

namespace fedtd {

CategoricalTable::CategoricalTable(const Matrix& probs) {
    cum_.resize(probs.rows(), probs.cols());
    for (int r = 0; r < probs.rows(); ++r) {
        double acc = 0.0;
        for (int c = 0; c < probs.cols(); ++c) {
            acc += probs(r, c);
            cum_(r, c) = acc;
        }
        cum_(r, probs.cols() - 1) = 1.0;
    }
}

int CategoricalTable::sample(int row, double u) const {
    const double* begin = cum_.data() + static_cast<std::ptrdiff_t>(row) * cum_.cols();
    const double* end = begin + cum_.cols();
    return static_cast<int>(std::upper_bound(begin, end, u) - begin);
}

AgentTables::AgentTables(const Mdp& mdp, const Policy& policy)
    : policy_(policy.probs), rewards_(mdp.rewards) {
    transitions_.reserve(mdp.transitions.size());
    for (const Matrix& pa : mdp.transitions) transitions_.emplace_back(pa);
}

AgentStream::AgentStream(const AgentTables& tables, SamplingMode mode,
                         std::uint64_t master_seed, std::uint64_t run_index,
                         int agent_index)
    : tables_(&tables),
      mode_(mode),
      agent_index_(agent_index),
      current_state_(0),
      rng_(derive_seed(derive_seed(master_seed, "run", run_index), "agent",
                       static_cast<std::uint64_t>(agent_index))) {
    current_state_ = static_cast<int>(rng_.uniform_index(tables.n_states()));
}

Transition AgentStream::step_markov() {
    if (mode_ != SamplingMode::markovian)
        throw ProtocolError("step_markov called on an iid stream");
    Transition tr;
    tr.s = current_state_;
    tr.a = tables_->sample_action(tr.s, rng_.uniform());
    tr.s_next = tables_->sample_next(tr.s, tr.a, rng_.uniform());
    tr.reward = tables_->reward(tr.s, tr.a);
    current_state_ = tr.s_next;
    return tr;
}

Transition AgentStream::step_iid(const StationaryDistribution& d_mu) {
    if (mode_ != SamplingMode::iid)
        throw ProtocolError("step_iid called on a markovian stream");
    Transition tr;
    double u = rng_.uniform();
    double acc = 0.0;
    tr.s = static_cast<int>(d_mu.d.size()) - 1;
    for (int s = 0; s < d_mu.d.size(); ++s) {
        acc += d_mu.d(s);
        if (u < acc) {
            tr.s = s;
            break;
        }
    }
    tr.a = tables_->sample_action(tr.s, rng_.uniform());
    tr.s_next = tables_->sample_next(tr.s, tr.a, rng_.uniform());
    tr.reward = tables_->reward(tr.s, tr.a);
    return tr;
}

MixingEstimate estimate_mixing(const InducedChain& chain, int horizon) {
    if (horizon < 10) throw ConfigError("estimate_mixing: horizon must be >= 10");
    StationaryDistribution sd = stationary_distribution(chain);
    const int n = chain.n_states();

    Matrix pt = chain.p_mu;
    std::vector<double> m(horizon + 1, 0.0);
    for (int t = 1; t <= horizon; ++t) {
        double worst = 0.0;
        for (int s = 0; s < n; ++s)
            worst = std::max(worst,
                             0.5 * (pt.row(s).transpose() - sd.d).lpNorm<1>());
        m[t] = worst;
        if (t < horizon) pt = pt * chain.p_mu;
    }

    MixingEstimate est;
    est.horizon = horizon;

    std::vector<double> xs, ys;
    for (int t = 1; t <= horizon; ++t)
        if (m[t] > 1e-14) {
            xs.push_back(static_cast<double>(t));
            ys.push_back(std::log(m[t]));
        }
    if (xs.size() < 2) {
        est.one_step = true;
        est.c_e_hat = std::max(m[1], 1e-300);
        est.alpha_hat = 0.0;
        return est;
    }

    bool decayed = false;
    for (int t = 1; t < horizon; ++t)
        if (m[t + 1] < m[t]) decayed = true;
    if (!decayed)
        throw NumericalError(
            "estimate_mixing: TV distances never decrease over the horizon");

    const double count = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
    mx /= count, my /= count;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
    }
    double slope = sxy / sxx;
    double intercept = my - slope * mx;
    est.alpha_hat = std::exp(slope);
    est.c_e_hat = std::exp(intercept);
    double ss = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        double r = ys[k] - (intercept + slope * xs[k]);
        ss += r * r;
    }
    est.fit_residual = std::sqrt(ss / count);
    return est;
}

}  // namespace fedtd
