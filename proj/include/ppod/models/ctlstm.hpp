#pragma once

// Continuous-time LSTM intensity model.
//
// Input events (a begin-of-sequence marker at the span start, then either
// every event or only the target events, depending on the view) update the
// cell. Between inputs the cell decays exponentially from c_k toward its
// limit cbar_k at rate delta_k:
//
//   c(t)  = cbar_k + (c_k - cbar_k) exp(-delta_k (t - t_k))
//   h(t)  = o_k * tanh(c(t))
//   lambda(t) = s log(1 + exp(w . h(t) / s))
//
// At input k, with h_in = h(t_k) and c_in = c(t_k) of the previous segment:
//
//   [i; o; f; ibar; fbar; z; delta] = act(W e_u + U h_in + d)
//   c_k     = f * c_in + i * z
//   cbar_k  = fbar * cbar_{k-1} + ibar * z
//
// with logistic gates, tanh for z and softplus for delta.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <nlohmann/json.hpp>

#include <ppod/common.hpp>
#include <ppod/models/cif.hpp>

namespace ppod {

inline double softplus(double x) {
    return x > 0? x + std::log1p(std::exp(-x)): std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0? 1/(1 + std::exp(-x)): std::exp(x)/(1 + std::exp(x));
}

namespace detail {

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
    return x.unaryExpr([](double v) { return ppod::sigmoid(v); });
}

inline Eigen::ArrayXd softplus(const Eigen::ArrayXd& x) {
    return x.unaryExpr([](double v) { return ppod::softplus(v); });
}

} // namespace detail

inline constexpr std::string_view bos_mark = "<bos>";

// Number of stacked gate blocks: i, o, f, ibar, fbar, z, delta.
inline constexpr int ctlstm_blocks = 7;

struct mc_sample {
    double t;
    double weight;
};

// Stratified Monte-Carlo points for the integral term: every blank
// interval is cut into equal strata no longer than max_stratum, one uniform
// point per stratum weighted by the stratum length.
template <typename Rng>
std::vector<mc_sample> mc_plan(const event_sequence& seq, double max_stratum, Rng& rng) {
    if (!(max_stratum > 0)) throw validation_error("Monte-Carlo stratum length must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<mc_sample> out;
    for (const auto& b: blank_intervals(seq)) {
        auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(b.length()/max_stratum)));
        double w = b.length()/static_cast<double>(m);
        for (std::size_t j = 0; j < m; ++j) {
            out.push_back({b.begin + (static_cast<double>(j) + unif(rng))*w, w});
        }
    }
    return out;
}

class ctlstm_model;

// Per-sequence forward pass: the state of every segment plus the
// activations needed for back-propagation.
struct ctlstm_trajectory {
    std::vector<double> t;        // input times, t[0] is the span start
    std::vector<int> mark;        // vocabulary index of each input
    std::vector<char> is_target;
    Eigen::MatrixXd c, cbar, delta, o;   // D x M, column k valid on (t_k, t_{k+1}]
    Eigen::MatrixXd act;                 // 7D x M activated gates
    Eigen::MatrixXd delta_slope;         // D x M, softplus'(pre-activation of delta)
    Eigen::MatrixXd c_in, h_in;          // D x M, cell and hidden state entering input k
    double span_end = 0;

    std::size_t size() const { return t.size(); }

    // Segment whose state governs time t: the last input before t, or at t
    // if it is not a target event.
    std::size_t segment_for(double when) const {
        std::size_t lo = 0, hi = t.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi)/2;
            if (t[mid] < when || (t[mid] == when && !is_target[mid])) lo = mid + 1;
            else hi = mid;
        }
        return lo == 0? 0: lo - 1;
    }

    // Decayed cell at time `when` inside segment k.
    Eigen::ArrayXd cell(std::size_t k, double when) const {
        Eigen::ArrayXd decay = (-delta.col(k).array()*(when - t[k])).exp();
        return cbar.col(k).array() + (c.col(k).array() - cbar.col(k).array())*decay;
    }

    Eigen::ArrayXd hidden(std::size_t k, double when) const {
        return o.col(k).array()*cell(k, when).tanh();
    }
};

class ctlstm_model: public cif_model {
public:
    ctlstm_model(std::vector<std::string> context_marks, int hidden, history_view view):
        context_marks_(std::move(context_marks)), hidden_(hidden), view_(view)
    {
        if (hidden < 1) throw validation_error("CT-LSTM hidden size must be positive");
        validate_context_marks(context_marks_);
        params_ = Eigen::VectorXd::Zero(parameter_count());
    }

    int hidden() const { return hidden_; }
    history_view view() const { return view_; }
    const std::vector<std::string>& context_marks() const { return context_marks_; }

    // Vocabulary: 0 = target, 1..C = context marks, C+1 = begin marker.
    int vocabulary() const { return static_cast<int>(context_marks_.size()) + 2; }
    int bos_index() const { return vocabulary() - 1; }

    int mark_index(const std::string& mark) const {
        if (mark == target_mark) return 0;
        auto it = std::find(context_marks_.begin(), context_marks_.end(), mark);
        if (it == context_marks_.end()) throw validation_error("CT-LSTM: unknown mark \"" + mark + "\"");
        return static_cast<int>(it - context_marks_.begin()) + 1;
    }

    Eigen::Index parameter_count() const {
        const Eigen::Index D = hidden_, K = vocabulary(), G = ctlstm_blocks*D;
        return D*K + G*D + G*D + G + D + 1;
    }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    // Named views into the flat parameter vector (column-major blocks).
    using cmap = Eigen::Map<const Eigen::MatrixXd>;
    using map = Eigen::Map<Eigen::MatrixXd>;

    struct layout {
        Eigen::Index D, K, G;
        Eigen::Index embedding, W, U, d, w_lambda, log_scale;
    };

    layout offsets() const {
        layout l{hidden_, vocabulary(), ctlstm_blocks*hidden_, 0, 0, 0, 0, 0, 0};
        l.embedding = 0;
        l.W = l.embedding + l.D*l.K;
        l.U = l.W + l.G*l.D;
        l.d = l.U + l.G*l.D;
        l.w_lambda = l.d + l.G;
        l.log_scale = l.w_lambda + l.D;
        return l;
    }

    cmap embedding() const { auto l = offsets(); return {params_.data() + l.embedding, l.D, l.K}; }
    cmap W() const { auto l = offsets(); return {params_.data() + l.W, l.G, l.D}; }
    cmap U() const { auto l = offsets(); return {params_.data() + l.U, l.G, l.D}; }
    cmap d() const { auto l = offsets(); return {params_.data() + l.d, l.G, 1}; }
    cmap w_lambda() const { auto l = offsets(); return {params_.data() + l.w_lambda, l.D, 1}; }
    double scale() const { return std::exp(params_[offsets().log_scale]); }

    // Uniform(-init_scale, init_scale) weights, unit softplus scale.
    void initialize(std::uint64_t seed, double init_scale = 0.1) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(-init_scale, init_scale);
        for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = unif(rng);
        params_[offsets().log_scale] = 0;
    }

    // Inputs seen under the model's view, starting with the begin marker.
    void inputs(const event_sequence& seq, std::vector<double>& t, std::vector<int>& mark, std::vector<char>& target) const {
        t.assign(1, seq.span.begin);
        mark.assign(1, bos_index());
        target.assign(1, 0);
        for (const auto& e: seq.events) {
            if (view_ == history_view::target_only && !e.is_target()) continue;
            t.push_back(e.t);
            mark.push_back(mark_index(e.mark));
            target.push_back(e.is_target());
        }
    }

    ctlstm_trajectory forward(const event_sequence& seq) const {
        const Eigen::Index D = hidden_;
        ctlstm_trajectory tr;
        inputs(seq, tr.t, tr.mark, tr.is_target);
        tr.span_end = seq.span.end;
        const auto M = static_cast<Eigen::Index>(tr.t.size());
        tr.c.resize(D, M);
        tr.cbar.resize(D, M);
        tr.delta.resize(D, M);
        tr.o.resize(D, M);
        tr.act.resize(ctlstm_blocks*D, M);
        tr.delta_slope.resize(D, M);
        tr.c_in.resize(D, M);
        tr.h_in.resize(D, M);

        const Eigen::MatrixXd WE = W()*embedding();
        const auto u = U();
        const auto bias = d();
        Eigen::ArrayXd cbar_prev = Eigen::ArrayXd::Zero(D);
        for (Eigen::Index k = 0; k < M; ++k) {
            if (k == 0) {
                tr.c_in.col(0).setZero();
                tr.h_in.col(0).setZero();
            }
            else {
                Eigen::ArrayXd cell = tr.cell(static_cast<std::size_t>(k - 1), tr.t[k]);
                tr.c_in.col(k) = cell.matrix();
                tr.h_in.col(k) = (tr.o.col(k - 1).array()*cell.tanh()).matrix();
                cbar_prev = tr.cbar.col(k - 1).array();
            }
            Eigen::VectorXd pre = WE.col(tr.mark[k]) + u*tr.h_in.col(k) + bias;
            Eigen::ArrayXd a(ctlstm_blocks*D);
            a.head(5*D) = detail::sigmoid(pre.head(5*D).array());
            a.segment(5*D, D) = pre.segment(5*D, D).array().tanh();
            a.tail(D) = detail::softplus(pre.tail(D).array());
            tr.delta_slope.col(k) = detail::sigmoid(pre.tail(D).array()).matrix();
            tr.act.col(k) = a.matrix();

            auto gi = a.segment(0, D), go = a.segment(D, D), gf = a.segment(2*D, D);
            auto gib = a.segment(3*D, D), gfb = a.segment(4*D, D), z = a.segment(5*D, D);
            tr.c.col(k) = (gf*tr.c_in.col(k).array() + gi*z).matrix();
            tr.cbar.col(k) = (gfb*cbar_prev + gib*z).matrix();
            tr.delta.col(k) = a.tail(D).matrix();
            tr.o.col(k) = go.matrix();
            if (!tr.c.col(k).allFinite() || !tr.cbar.col(k).allFinite() || !tr.delta.col(k).allFinite() || !tr.o.col(k).allFinite()) {
                throw numerical_error("CT-LSTM forward: non-finite state at input event " + std::to_string(k));
            }
        }
        return tr;
    }

    double intensity_at(const ctlstm_trajectory& tr, std::size_t k, double when) const {
        double s = scale();
        double a = w_lambda().col(0).dot(tr.hidden(k, when).matrix());
        return s*softplus(a/s);
    }

    std::unique_ptr<cif_session> bind(const event_sequence& seq) const override {
        return std::make_unique<session>(*this, forward(seq));
    }

    std::string kind() const override { return "ctlstm"; }

    nlohmann::json to_json() const {
        auto l = offsets();
        auto block = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
            std::vector<double> data(params_.data() + offset, params_.data() + offset + rows*cols);
            return nlohmann::json{{"shape", {rows, cols}}, {"data", data}};
        };
        return {
            {"kind", "ctlstm"},
            {"view", to_string(view_)},
            {"hidden", hidden_},
            {"context_marks", context_marks_},
            {"params", {
                {"embedding", block(l.embedding, l.D, l.K)},
                {"W", block(l.W, l.G, l.D)},
                {"U", block(l.U, l.G, l.D)},
                {"d", block(l.d, l.G, 1)},
                {"w_lambda", block(l.w_lambda, l.D, 1)},
                {"log_scale", block(l.log_scale, 1, 1)},
            }},
        };
    }

    static ctlstm_model from_json(const nlohmann::json& j) {
        ctlstm_model m(j.at("context_marks").get<std::vector<std::string>>(), j.at("hidden").get<int>(),
                       parse_history_view(j.at("view").get<std::string>()));
        auto l = m.offsets();
        const auto& p = j.at("params");
        auto read = [&](const char* name, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
            const auto& b = p.at(name);
            auto shape = b.at("shape").get<std::vector<Eigen::Index>>();
            auto data = b.at("data").get<std::vector<double>>();
            if (shape != std::vector<Eigen::Index>{rows, cols} || static_cast<Eigen::Index>(data.size()) != rows*cols) {
                throw validation_error(std::string("CT-LSTM parameter block '") + name + "' has the wrong shape");
            }
            std::copy(data.begin(), data.end(), m.params_.data() + offset);
        };
        read("embedding", l.embedding, l.D, l.K);
        read("W", l.W, l.G, l.D);
        read("U", l.U, l.G, l.D);
        read("d", l.d, l.G, 1);
        read("w_lambda", l.w_lambda, l.D, 1);
        read("log_scale", l.log_scale, 1, 1);
        return m;
    }

private:
    struct session: cif_session {
        session(const ctlstm_model& m, ctlstm_trajectory tr): model(m), traj(std::move(tr)) {}

        double intensity(double t) const override {
            return model.intensity_at(traj, traj.segment_for(t), t);
        }

        // Piecewise 8-point Gauss-Legendre over the segments that cover
        // (b, e), each piece short relative to the fastest decay.
        double cumulative(double b, double e) const override {
            using rule = boost::math::quadrature::gauss<double, 8>;
            static const auto& nodes = rule::abscissa();
            static const auto& weights = rule::weights();
            if (e <= b) return 0;
            // Segments covering points just after b: the last input at or before b.
            std::size_t k = std::upper_bound(traj.t.begin(), traj.t.end(), b) - traj.t.begin();
            k = k == 0? 0: k - 1;
            double total = 0;
            double from = b;
            while (from < e) {
                double to = k + 1 < traj.size()? std::min(e, traj.t[k + 1]): e;
                if (to > from) {
                    double rate = std::max(1.0, traj.delta.col(static_cast<Eigen::Index>(k)).maxCoeff());
                    auto pieces = static_cast<int>(std::clamp(std::ceil((to - from)*rate/2), 1.0, 4096.0));
                    double h = (to - from)/pieces;
                    for (int p = 0; p < pieces; ++p) {
                        double mid = from + (p + 0.5)*h, half = h/2;
                        for (int q = 0; q < 4; ++q) {
                            total += weights[q]*half*(model.intensity_at(traj, k, mid - nodes[q]*half) +
                                                      model.intensity_at(traj, k, mid + nodes[q]*half));
                        }
                    }
                }
                from = to;
                ++k;
            }
            return total;
        }

        const ctlstm_model& model;
        ctlstm_trajectory traj;
    };

    std::vector<std::string> context_marks_;
    int hidden_;
    history_view view_;
    Eigen::VectorXd params_;
};

struct ll_gradient {
    double ll = 0;
    Eigen::VectorXd grad;
};

namespace detail {

struct ctlstm_eval {
    std::size_t segment;
    double t;
    double weight;   // MC weight; unused for events
    bool is_event;
};

inline std::vector<ctlstm_eval> ctlstm_evals(const ctlstm_trajectory& tr, const event_sequence& seq, const std::vector<mc_sample>& plan) {
    std::vector<ctlstm_eval> evals;
    for (double t: seq.target_times()) evals.push_back({tr.segment_for(t), t, 0, true});
    for (const auto& s: plan) evals.push_back({tr.segment_for(s.t), s.t, s.weight, false});
    std::stable_sort(evals.begin(), evals.end(), [](const auto& a, const auto& b) { return a.segment < b.segment; });
    return evals;
}

} // namespace detail

// Monte-Carlo log-likelihood: sum of log-intensities at target events minus
// the weighted intensities at the plan's sample points.
inline double ctlstm_log_likelihood(const ctlstm_model& model, const event_sequence& seq, const std::vector<mc_sample>& plan) {
    auto tr = model.forward(seq);
    double ll = 0;
    for (const auto& ev: detail::ctlstm_evals(tr, seq, plan)) {
        double lam = model.intensity_at(tr, ev.segment, ev.t);
        ll += ev.is_event? std::log(lam): -ev.weight*lam;
    }
    return ll;
}

// Exact reverse-mode gradient of ctlstm_log_likelihood for a fixed plan.
inline ll_gradient ctlstm_gradient(const ctlstm_model& model, const event_sequence& seq, const std::vector<mc_sample>& plan) {
    using Eigen::ArrayXd;
    const auto tr = model.forward(seq);
    const auto evals = detail::ctlstm_evals(tr, seq, plan);
    const auto l = model.offsets();
    const Eigen::Index D = l.D, M = static_cast<Eigen::Index>(tr.size());

    ll_gradient out;
    out.grad = Eigen::VectorXd::Zero(model.parameter_count());
    Eigen::MatrixXd g_pre(l.G, M);
    Eigen::MatrixXd g_we = Eigen::MatrixXd::Zero(l.G, l.K);
    Eigen::VectorXd g_wl = Eigen::VectorXd::Zero(D);
    double g_log_scale = 0;

    const ArrayXd wl = model.w_lambda().col(0).array();
    const double s = model.scale();
    const auto u = model.U();

    // Adjoints of the state of the segment being processed.
    ArrayXd gc = ArrayXd::Zero(D), gcbar = ArrayXd::Zero(D), gdelta = ArrayXd::Zero(D), go = ArrayXd::Zero(D);
    std::size_t next_eval = evals.size();

    for (Eigen::Index k = M - 1; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        const ArrayXd c = tr.c.col(k).array(), cbar = tr.cbar.col(k).array();
        const ArrayXd delta = tr.delta.col(k).array(), o = tr.o.col(k).array();

        for (; next_eval > 0 && evals[next_eval - 1].segment == kk; --next_eval) {
            const auto& ev = evals[next_eval - 1];
            const double tau = ev.t - tr.t[kk];
            const ArrayXd decay = (-delta*tau).exp();
            const ArrayXd cell = cbar + (c - cbar)*decay;
            const ArrayXd th = cell.tanh();
            const ArrayXd h = o*th;
            const double a = (wl*h).sum();
            const double x = a/s, sp = softplus(x), sg = sigmoid(x);
            const double lam = s*sp;
            const double coef = ev.is_event? 1/lam: -ev.weight;
            out.ll += ev.is_event? std::log(lam): -ev.weight*lam;

            const double g_a = coef*sg;
            g_wl += (g_a*h).matrix();
            g_log_scale += coef*s*(sp - x*sg);
            const ArrayXd g_h = g_a*wl;
            go += g_h*th;
            const ArrayXd g_cell = g_h*o*(1 - th.square());
            gc += g_cell*decay;
            gcbar += g_cell*(1 - decay);
            gdelta -= g_cell*tau*(c - cbar)*decay;
        }

        // Back through the update at input k.
        const ArrayXd a = tr.act.col(k).array();
        const auto gi = a.segment(0, D), gate_o = a.segment(D, D), gf = a.segment(2*D, D);
        const auto gib = a.segment(3*D, D), gfb = a.segment(4*D, D), z = a.segment(5*D, D);
        const ArrayXd c_in = tr.c_in.col(k).array();
        const ArrayXd cbar_prev = k > 0? ArrayXd(tr.cbar.col(k - 1).array()): ArrayXd::Zero(D);

        ArrayXd gp(l.G);
        gp.segment(0, D) = gc*z*gi*(1 - gi);
        gp.segment(D, D) = go*gate_o*(1 - gate_o);
        gp.segment(2*D, D) = gc*c_in*gf*(1 - gf);
        gp.segment(3*D, D) = gcbar*z*gib*(1 - gib);
        gp.segment(4*D, D) = gcbar*cbar_prev*gfb*(1 - gfb);
        gp.segment(5*D, D) = (gc*gi + gcbar*gib)*(1 - z.square());
        gp.segment(6*D, D) = gdelta*tr.delta_slope.col(k).array();
        g_pre.col(k) = gp.matrix();
        g_we.col(tr.mark[kk]) += gp.matrix();

        if (k == 0) break;

        // h_in and c_in came from segment k-1 evaluated at t_k.
        const ArrayXd g_h_in = (u.transpose()*gp.matrix()).array();
        const ArrayXd g_c_in = gc*gf;
        const ArrayXd g_cbar_prev = gcbar*gfb;
        const auto p = static_cast<std::size_t>(k - 1);
        const ArrayXd pc = tr.c.col(k - 1).array(), pcbar = tr.cbar.col(k - 1).array();
        const double tau = tr.t[kk] - tr.t[p];
        const ArrayXd decay = (-tr.delta.col(k - 1).array()*tau).exp();
        const ArrayXd th = (pcbar + (pc - pcbar)*decay).tanh();
        const ArrayXd g_cell = g_h_in*tr.o.col(k - 1).array()*(1 - th.square()) + g_c_in;
        go = g_h_in*th;
        gc = g_cell*decay;
        gcbar = g_cell*(1 - decay) + g_cbar_prev;
        gdelta = -g_cell*tau*(pc - pcbar)*decay;
    }

    auto& g = out.grad;
    ctlstm_model::map(g.data() + l.embedding, D, l.K) = model.W().transpose()*g_we;
    ctlstm_model::map(g.data() + l.W, l.G, D) = g_we*model.embedding().transpose();
    ctlstm_model::map(g.data() + l.U, l.G, D) = g_pre*tr.h_in.transpose();
    ctlstm_model::map(g.data() + l.d, l.G, 1) = g_pre.rowwise().sum();
    g.segment(l.w_lambda, D) = g_wl;
    g[l.log_scale] = g_log_scale;
    return out;
}

} // namespace ppod
