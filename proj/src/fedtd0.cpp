#include "fedtd/fedtd0.hpp"

#include <Eigen/LU>
#include <cmath>

#include "fedtd/errors.hpp"

namespace fedtd {

void StepSchedule::validate() const {
    if (!(beta_exponent > 0.0 && beta_exponent <= 1.0))
        throw ConfigError("schedule: beta exponent must lie in (0,1]");
}

double StepSchedule::beta(std::int64_t t) const {
    return std::pow(static_cast<double>(t) + 1.0, -beta_exponent);
}

Vector avg_td_error(const Vector& phi_s, const Vector& phi_s_next, double reward,
                    double r_t, const Vector& theta) {
    double td = (phi_s_next - phi_s).dot(theta);
    return (reward - r_t) * phi_s + td * phi_s;
}

double avg_local_reward_update(double r_local_i, double reward, std::int64_t t) {
    return r_local_i + (reward - r_local_i) / (static_cast<double>(t) + 1.0);
}

Vector exp_td_error(const Vector& phi_s, const Vector& phi_s_next, double reward,
                    double gamma, const Vector& vartheta) {
    double td = gamma * phi_s_next.dot(vartheta) - phi_s.dot(vartheta);
    return reward * phi_s + td * phi_s;
}

void avg_server_step(AvgFedTdState& state, const std::vector<Vector>& deltas,
                     const std::vector<double>& r_locals, double beta_t) {
    const std::size_t n = state.r_local.size();
    if (deltas.size() != n || r_locals.size() != n)
        throw ProtocolError(
            "avg_server_step: need one delta and one reward estimate per agent");
    Vector sum = Vector::Zero(state.theta.size());
    for (const Vector& d : deltas) sum += d;
    Vector theta_next = state.theta + (beta_t / static_cast<double>(n)) * sum;
    state.theta_bar +=
        (state.theta - state.theta_bar) / (static_cast<double>(state.t) + 1.0);
    state.theta = theta_next;
    double acc = 0.0;
    for (double r : r_locals) acc += r;
    state.r_global = acc / static_cast<double>(n);
    state.r_local = r_locals;
    state.t += 1;
}

void exp_server_step(ExpFedTdState& state, const std::vector<Vector>& deltas,
                     double beta_t) {
    if (deltas.empty())
        throw ProtocolError("exp_server_step: need one delta per agent");
    Vector sum = Vector::Zero(state.vartheta.size());
    for (const Vector& d : deltas) sum += d;
    Vector next =
        state.vartheta + (beta_t / static_cast<double>(deltas.size())) * sum;
    state.vartheta_bar += (state.vartheta - state.vartheta_bar) /
                          (static_cast<double>(state.t) + 1.0);
    state.vartheta = next;
    state.t += 1;
}

CellContext::CellContext(const AgentFamily& family, double gamma,
                         bool build_tables)
    : family_(&family), gamma_(gamma) {
    const int n = family.n_agents();
    if (n < 1) throw ConfigError("cell: empty family");
    agent_solutions_.reserve(n);
    for (const Mdp& mdp : family.mdps)
        agent_solutions_.push_back(
            solve_agent(mdp, family.policy, family.phi, gamma));
    global_ = solve_global(agent_solutions_);
    phi_t_ = family.phi.phi.transpose();
    const int dim = static_cast<int>(phi_t_.rows());
    ups_bar_ = Matrix::Zero(dim, dim);
    for (const AgentSolution& sol : agent_solutions_) ups_bar_ += sol.ups_mat;
    ups_bar_ /= static_cast<double>(n);
    Eigen::PartialPivLU<Matrix> lu(ups_bar_);
    vartheta_star_bar_ = lu.solve(global_.b_bar);
    vartheta_star_bar_ += lu.solve(global_.b_bar - ups_bar_ * vartheta_star_bar_);
    if (build_tables) {
        tables_.reserve(n);
        for (const Mdp& mdp : family.mdps)
            tables_.emplace_back(mdp, family.policy);
    }
}

namespace {

bool iterate_bad(const Vector& v) {
    return !v.allFinite() || v.squaredNorm() > 1e24;
}

void check_run_options(const RunOptions& opts) {
    if (opts.horizon < 1) throw ConfigError("run: horizon must be >= 1");
    if (opts.stride < 1) throw ConfigError("run: stride must be >= 1");
}

}  // namespace

RunTrace run_avgfedtd(const CellContext& ctx, const StepSchedule& schedule,
                      const RunOptions& opts) {
    schedule.validate();
    check_run_options(opts);
    const int n = ctx.n_agents();
    const int dim = ctx.d();
    Vector theta = opts.theta0.size() ? opts.theta0 : Vector::Zero(dim);
    if (theta.size() != dim) throw ConfigError("run: theta0 dimension mismatch");
    Vector theta_bar = theta;
    std::vector<double> r_local(n, opts.r0);
    double r_global = opts.r0;

    const Vector& theta_ref = opts.reference_global
                                  ? ctx.global().theta_star_bar
                                  : ctx.agent_solutions()[0].theta_star;
    const double r_ref = opts.reference_global
                             ? ctx.global().r_star_bar
                             : ctx.agent_solutions()[0].r_star;

    RunTrace trace;
    trace.run_index = opts.run_index;
    const std::size_t cap =
        static_cast<std::size_t>(opts.horizon / opts.stride) + 2;
    trace.ts.reserve(cap);
    trace.err_primary.reserve(cap);
    trace.err_reward.reserve(cap);

    const bool expected = opts.update_mode == UpdateMode::expected;
    std::vector<AgentStream> streams;
    if (!expected) {
        streams.reserve(n);
        for (int i = 0; i < n; ++i)
            streams.emplace_back(ctx.tables(opts.shared_stream ? 0 : i), opts.mode,
                                 opts.master_seed, opts.run_index,
                                 opts.shared_stream ? 0 : i);
    }
    const Matrix& phit = ctx.phi_t();
    Vector delta_sum(dim), theta_next(dim);

    for (std::int64_t t = 0; t < opts.horizon; ++t) {
        const double beta_t = schedule.beta(t);
        if (expected) {
            delta_sum.noalias() =
                ctx.global().b_bar - ctx.global().v_bar * r_global;
            delta_sum.noalias() -= ctx.global().a_bar * theta;
            theta_next = theta + beta_t * delta_sum;
            for (int i = 0; i < n; ++i)
                r_local[i] = avg_local_reward_update(
                    r_local[i], ctx.agent_solutions()[i].r_star, t);
        } else {
            delta_sum.setZero();
            for (int i = 0; i < n; ++i) {
                Transition tr =
                    opts.mode == SamplingMode::markovian
                        ? streams[i].step_markov()
                        : streams[i].step_iid(ctx.agent_solutions()[i].d_mu);
                double td = (phit.col(tr.s_next) - phit.col(tr.s)).dot(theta);
                delta_sum.noalias() += (tr.reward - r_global + td) * phit.col(tr.s);
                r_local[i] = avg_local_reward_update(r_local[i], tr.reward, t);
            }
            theta_next = theta + (beta_t / static_cast<double>(n)) * delta_sum;
        }
        theta_bar += (theta - theta_bar) / (static_cast<double>(t) + 1.0);
        theta.swap(theta_next);
        double acc = 0.0;
        for (double r : r_local) acc += r;
        r_global = acc / static_cast<double>(n);

        const std::int64_t t1 = t + 1;
        const bool record = t1 % opts.stride == 0 || t1 == opts.horizon;
        if (record || (t1 & 15) == 0) {
            if (iterate_bad(theta)) {
                trace.diverged = true;
                break;
            }
            trace.last_finite_t = t1;
        }
        if (record) {
            trace.ts.push_back(t1);
            trace.err_primary.push_back((theta_bar - theta_ref).squaredNorm());
            const double dr = r_global - r_ref;
            trace.err_reward.push_back(dr * dr);
        }
    }
    return trace;
}

RunTrace run_expfedtd(const CellContext& ctx, const StepSchedule& schedule,
                      const RunOptions& opts) {
    schedule.validate();
    check_run_options(opts);
    const int n = ctx.n_agents();
    const int dim = ctx.d();
    const double gamma = ctx.gamma();
    Vector vartheta = opts.theta0.size() ? opts.theta0 : Vector::Zero(dim);
    if (vartheta.size() != dim)
        throw ConfigError("run: theta0 dimension mismatch");
    Vector vartheta_bar = vartheta;

    const Vector& ref = opts.reference_global
                            ? ctx.vartheta_star_bar()
                            : ctx.agent_solutions()[0].vartheta_star;

    RunTrace trace;
    trace.run_index = opts.run_index;
    const std::size_t cap =
        static_cast<std::size_t>(opts.horizon / opts.stride) + 2;
    trace.ts.reserve(cap);
    trace.err_primary.reserve(cap);

    const bool expected = opts.update_mode == UpdateMode::expected;
    std::vector<AgentStream> streams;
    if (!expected) {
        streams.reserve(n);
        for (int i = 0; i < n; ++i)
            streams.emplace_back(ctx.tables(opts.shared_stream ? 0 : i), opts.mode,
                                 opts.master_seed, opts.run_index,
                                 opts.shared_stream ? 0 : i);
    }
    const Matrix& phit = ctx.phi_t();
    Vector delta_sum(dim), next(dim);

    for (std::int64_t t = 0; t < opts.horizon; ++t) {
        const double beta_t = schedule.beta(t);
        if (expected) {
            delta_sum.noalias() = ctx.global().b_bar - ctx.ups_bar() * vartheta;
            next = vartheta + beta_t * delta_sum;
        } else {
            delta_sum.setZero();
            for (int i = 0; i < n; ++i) {
                Transition tr =
                    opts.mode == SamplingMode::markovian
                        ? streams[i].step_markov()
                        : streams[i].step_iid(ctx.agent_solutions()[i].d_mu);
                double td = gamma * phit.col(tr.s_next).dot(vartheta) -
                            phit.col(tr.s).dot(vartheta);
                delta_sum.noalias() += (tr.reward + td) * phit.col(tr.s);
            }
            next = vartheta + (beta_t / static_cast<double>(n)) * delta_sum;
        }
        vartheta_bar += (vartheta - vartheta_bar) / (static_cast<double>(t) + 1.0);
        vartheta.swap(next);

        const std::int64_t t1 = t + 1;
        const bool record = t1 % opts.stride == 0 || t1 == opts.horizon;
        if (record || (t1 & 15) == 0) {
            if (iterate_bad(vartheta)) {
                trace.diverged = true;
                break;
            }
            trace.last_finite_t = t1;
        }
        if (record) {
            trace.ts.push_back(t1);
            trace.err_primary.push_back((vartheta_bar - ref).squaredNorm());
        }
    }
    return trace;
}

}  // namespace fedtd
