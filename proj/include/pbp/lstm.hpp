#ifndef PBP_LSTM_HPP
#define PBP_LSTM_HPP

// MC-Dropout LSTM ensemble baseline: 5 single-layer LSTMs with a ReLU scalar
// readout, trained by squared error with Adam, with dropout applied to the
// hidden state at inference time only.

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/rnn.hpp"

namespace pbp {

struct LstmNet {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
  // Gate order everywhere: input, forget, output, candidate.
  Eigen::MatrixXd Wi, Wf, Wo, Wg;  // hidden x input
  Eigen::MatrixXd Ui, Uf, Uo, Ug;  // hidden x hidden
  Eigen::VectorXd bi, bf, bo, bg;  // hidden
  Eigen::VectorXd readout;         // hidden
  double readout_bias = 0.0;

  static LstmNet random_init(Eigen::Index input_dim, Eigen::Index hidden_dim,
                             std::mt19937_64& rng) {
    LstmNet net;
    net.input_dim = input_dim;
    net.hidden_dim = hidden_dim;
    std::normal_distribution<double> normal(0.0, 0.1);
    auto fill = [&](Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c) {
      m.resize(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
    };
    fill(net.Wi, hidden_dim, input_dim);
    fill(net.Wf, hidden_dim, input_dim);
    fill(net.Wo, hidden_dim, input_dim);
    fill(net.Wg, hidden_dim, input_dim);
    fill(net.Ui, hidden_dim, hidden_dim);
    fill(net.Uf, hidden_dim, hidden_dim);
    fill(net.Uo, hidden_dim, hidden_dim);
    fill(net.Ug, hidden_dim, hidden_dim);
    net.bi = Eigen::VectorXd::Zero(hidden_dim);
    net.bf = Eigen::VectorXd::Zero(hidden_dim);
    net.bo = Eigen::VectorXd::Zero(hidden_dim);
    net.bg = Eigen::VectorXd::Zero(hidden_dim);
    net.readout.resize(hidden_dim);
    for (Eigen::Index i = 0; i < hidden_dim; ++i) net.readout[i] = normal(rng);
    net.readout_bias = 0.0;
    return net;
  }

  // Visits every parameter block in a fixed order; used by Adam, the
  // checkpoint writer and the gradient container.
  template <class F>
  void for_each_matrix(F&& f) {
    f(Wi); f(Wf); f(Wo); f(Wg);
    f(Ui); f(Uf); f(Uo); f(Ug);
  }
  template <class F>
  void for_each_vector(F&& f) {
    f(bi); f(bf); f(bo); f(bg); f(readout);
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Forward pass over the window. If a dropout mask is given, the hidden state
// is masked and rescaled by 1/(1 - dropout_rate) at every step.
inline double lstm_forward(const LstmNet& net, const ObservationSequenced& seq,
                           const Eigen::VectorXd* dropout_mask = nullptr,
                           double dropout_rate = 0.0) {
  if (seq.feature_dim() != net.input_dim)
    throw ContractError("lstm_forward: feature dim mismatch");
  if (dropout_mask && dropout_mask->size() != net.hidden_dim)
    throw ContractError("lstm_forward: mask size mismatch");
  const Eigen::Index H = net.hidden_dim;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  const double keep_scale =
      dropout_mask ? 1.0 / (1.0 - dropout_rate) : 1.0;
  for (Eigen::Index t = 0; t < seq.length(); ++t) {
    const Eigen::VectorXd x = seq.steps.row(t).transpose();
    Eigen::VectorXd zi = net.Wi * x + net.Ui * h + net.bi;
    Eigen::VectorXd zf = net.Wf * x + net.Uf * h + net.bf;
    Eigen::VectorXd zo = net.Wo * x + net.Uo * h + net.bo;
    Eigen::VectorXd zg = net.Wg * x + net.Ug * h + net.bg;
    Eigen::VectorXd ig = zi.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd fg = zf.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd og = zo.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd gg = zg.array().tanh();
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    h = og.cwiseProduct(c.array().tanh().matrix());
    if (dropout_mask) h = keep_scale * h.cwiseProduct(*dropout_mask);
  }
  return std::max(0.0, net.readout.dot(h) + net.readout_bias);
}

// Gradients with the same layout as the net.
struct LstmGradients {
  Eigen::MatrixXd Wi, Wf, Wo, Wg, Ui, Uf, Uo, Ug;
  Eigen::VectorXd bi, bf, bo, bg, readout;
  double readout_bias = 0.0;

  static LstmGradients zeros_like(const LstmNet& net) {
    LstmGradients g;
    auto zm = [](Eigen::Index r, Eigen::Index c) {
      return Eigen::MatrixXd::Zero(r, c);
    };
    const Eigen::Index H = net.hidden_dim, D = net.input_dim;
    g.Wi = zm(H, D); g.Wf = zm(H, D); g.Wo = zm(H, D); g.Wg = zm(H, D);
    g.Ui = zm(H, H); g.Uf = zm(H, H); g.Uo = zm(H, H); g.Ug = zm(H, H);
    g.bi = Eigen::VectorXd::Zero(H); g.bf = Eigen::VectorXd::Zero(H);
    g.bo = Eigen::VectorXd::Zero(H); g.bg = Eigen::VectorXd::Zero(H);
    g.readout = Eigen::VectorXd::Zero(H);
    return g;
  }
};

// Squared-error loss and its gradients via BPTT (no dropout at training).
inline double lstm_backward(const LstmNet& net, const ObservationSequenced& seq,
                            double target, LstmGradients& grad) {
  const Eigen::Index T = seq.length();
  const Eigen::Index H = net.hidden_dim;
  std::vector<Eigen::VectorXd> xs(T), ig(T), fg(T), og(T), gg(T), cs(T + 1),
      hs(T + 1);
  cs[0] = Eigen::VectorXd::Zero(H);
  hs[0] = Eigen::VectorXd::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    xs[t] = seq.steps.row(t).transpose();
    Eigen::VectorXd zi = net.Wi * xs[t] + net.Ui * hs[t] + net.bi;
    Eigen::VectorXd zf = net.Wf * xs[t] + net.Uf * hs[t] + net.bf;
    Eigen::VectorXd zo = net.Wo * xs[t] + net.Uo * hs[t] + net.bo;
    Eigen::VectorXd zg = net.Wg * xs[t] + net.Ug * hs[t] + net.bg;
    ig[t] = zi.unaryExpr([](double v) { return sigmoid(v); });
    fg[t] = zf.unaryExpr([](double v) { return sigmoid(v); });
    og[t] = zo.unaryExpr([](double v) { return sigmoid(v); });
    gg[t] = zg.array().tanh();
    cs[t + 1] = fg[t].cwiseProduct(cs[t]) + ig[t].cwiseProduct(gg[t]);
    hs[t + 1] = og[t].cwiseProduct(cs[t + 1].array().tanh().matrix());
  }
  const double s = net.readout.dot(hs[T]) + net.readout_bias;
  const double y_hat = std::max(0.0, s);
  const double loss = (y_hat - target) * (y_hat - target);
  const double dl_ds = (s > 0.0) ? 2.0 * (y_hat - target) : 0.0;

  grad.readout += dl_ds * hs[T];
  grad.readout_bias += dl_ds;

  Eigen::VectorXd dh = dl_ds * net.readout;
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Eigen::VectorXd tanh_c = cs[t + 1].array().tanh();
    dc += dh.cwiseProduct(og[t]).cwiseProduct(
        (1.0 - tanh_c.array().square()).matrix());
    const Eigen::VectorXd do_ = dh.cwiseProduct(tanh_c);
    const Eigen::VectorXd di = dc.cwiseProduct(gg[t]);
    const Eigen::VectorXd dg = dc.cwiseProduct(ig[t]);
    const Eigen::VectorXd df = dc.cwiseProduct(cs[t]);

    const Eigen::VectorXd dzi =
        di.cwiseProduct(ig[t]).cwiseProduct((1.0 - ig[t].array()).matrix());
    const Eigen::VectorXd dzf =
        df.cwiseProduct(fg[t]).cwiseProduct((1.0 - fg[t].array()).matrix());
    const Eigen::VectorXd dzo =
        do_.cwiseProduct(og[t]).cwiseProduct((1.0 - og[t].array()).matrix());
    const Eigen::VectorXd dzg =
        dg.cwiseProduct((1.0 - gg[t].array().square()).matrix());

    grad.Wi.noalias() += dzi * xs[t].transpose();
    grad.Wf.noalias() += dzf * xs[t].transpose();
    grad.Wo.noalias() += dzo * xs[t].transpose();
    grad.Wg.noalias() += dzg * xs[t].transpose();
    grad.Ui.noalias() += dzi * hs[t].transpose();
    grad.Uf.noalias() += dzf * hs[t].transpose();
    grad.Uo.noalias() += dzo * hs[t].transpose();
    grad.Ug.noalias() += dzg * hs[t].transpose();
    grad.bi += dzi;
    grad.bf += dzf;
    grad.bo += dzo;
    grad.bg += dzg;

    dh = net.Ui.transpose() * dzi + net.Uf.transpose() * dzf +
         net.Uo.transpose() * dzo + net.Ug.transpose() * dzg;
    dc = dc.cwiseProduct(fg[t]);
  }
  return loss;
}

struct AdamState {
  long step = 0;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LstmGradients m;  // first-moment accumulators
  LstmGradients v;  // second-moment accumulators

  static AdamState for_net(const LstmNet& net, double lr = 0.001) {
    AdamState st;
    st.learning_rate = lr;
    st.m = LstmGradients::zeros_like(net);
    st.v = LstmGradients::zeros_like(net);
    return st;
  }
};

namespace detail {
template <class T>
void adam_apply(T& param, T& m, T& v, const T& g, const AdamState& st,
                double corr1, double corr2) {
  m = st.beta1 * m + (1.0 - st.beta1) * g;
  v = st.beta2 * v.array().matrix() +
      (1.0 - st.beta2) * g.array().square().matrix();
  param.array() -= st.learning_rate * (m.array() / corr1) /
                   ((v.array() / corr2).sqrt() + st.epsilon);
}
}  // namespace detail

inline void adam_step(LstmNet& net, AdamState& st, const LstmGradients& g) {
  ++st.step;
  const double corr1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double corr2 = 1.0 - std::pow(st.beta2, double(st.step));
  detail::adam_apply(net.Wi, st.m.Wi, st.v.Wi, g.Wi, st, corr1, corr2);
  detail::adam_apply(net.Wf, st.m.Wf, st.v.Wf, g.Wf, st, corr1, corr2);
  detail::adam_apply(net.Wo, st.m.Wo, st.v.Wo, g.Wo, st, corr1, corr2);
  detail::adam_apply(net.Wg, st.m.Wg, st.v.Wg, g.Wg, st, corr1, corr2);
  detail::adam_apply(net.Ui, st.m.Ui, st.v.Ui, g.Ui, st, corr1, corr2);
  detail::adam_apply(net.Uf, st.m.Uf, st.v.Uf, g.Uf, st, corr1, corr2);
  detail::adam_apply(net.Uo, st.m.Uo, st.v.Uo, g.Uo, st, corr1, corr2);
  detail::adam_apply(net.Ug, st.m.Ug, st.v.Ug, g.Ug, st, corr1, corr2);
  detail::adam_apply(net.bi, st.m.bi, st.v.bi, g.bi, st, corr1, corr2);
  detail::adam_apply(net.bf, st.m.bf, st.v.bf, g.bf, st, corr1, corr2);
  detail::adam_apply(net.bo, st.m.bo, st.v.bo, g.bo, st, corr1, corr2);
  detail::adam_apply(net.bg, st.m.bg, st.v.bg, g.bg, st, corr1, corr2);
  detail::adam_apply(net.readout, st.m.readout, st.v.readout, g.readout, st,
                     corr1, corr2);
  // Scalar bias.
  st.m.readout_bias =
      st.beta1 * st.m.readout_bias + (1.0 - st.beta1) * g.readout_bias;
  st.v.readout_bias = st.beta2 * st.v.readout_bias +
                      (1.0 - st.beta2) * g.readout_bias * g.readout_bias;
  net.readout_bias -= st.learning_rate * (st.m.readout_bias / corr1) /
                      (std::sqrt(st.v.readout_bias / corr2) + st.epsilon);
}

struct Ensemble {
  std::vector<LstmNet> members;
  std::vector<AdamState> optimizers;
  // Fraction of hidden units zeroed per step (keep probability 0.7).
  // Dropping most of the hidden state every step would inflate the
  // Monte-Carlo spread by two orders of magnitude and drown the ensemble's
  // actual disagreement, so the drop rate stays the minority share.
  double dropout_rate = 0.3;
  int passes_per_member = 20;

  static Ensemble random_init(int n_members, Eigen::Index input_dim,
                              Eigen::Index hidden_dim, const SeedSplitter& seeds,
                              double learning_rate = 0.001) {
    if (n_members < 1) throw ContractError("Ensemble: needs at least 1 member");
    Ensemble e;
    for (int k = 0; k < n_members; ++k) {
      auto rng = seeds.stream("mde-init", uint64_t(k));
      e.members.push_back(LstmNet::random_init(input_dim, hidden_dim, rng));
      e.optimizers.push_back(AdamState::for_net(e.members.back(), learning_rate));
    }
    return e;
  }
};

struct MdeTrainStats {
  std::vector<double> epoch_mean_loss;  // averaged over members
};

// Per-member independent training: distinct shuffles per member, per-example
// Adam steps on squared error, no dropout at training time.
inline MdeTrainStats train_mde(
    Ensemble& ensemble,
    const std::vector<std::pair<ObservationSequenced, double>>& dataset,
    int epochs, const SeedSplitter& seeds, uint64_t round = 0) {
  if (dataset.empty()) throw ContractError("train_mde: empty dataset");
  MdeTrainStats stats;
  stats.epoch_mean_loss.assign(size_t(std::max(epochs, 0)), 0.0);
  for (size_t k = 0; k < ensemble.members.size(); ++k) {
    auto rng = seeds.stream("mde-shuffle",
                            (round << 8) ^ uint64_t(k));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0.0;
      for (size_t idx : order) {
        LstmGradients g = LstmGradients::zeros_like(ensemble.members[k]);
        total += lstm_backward(ensemble.members[k], dataset[idx].first,
                               dataset[idx].second, g);
        adam_step(ensemble.members[k], ensemble.optimizers[k], g);
      }
      stats.epoch_mean_loss[size_t(e)] +=
          total / double(dataset.size()) / double(ensemble.members.size());
    }
  }
  return stats;
}

// One Bernoulli hidden-unit keep mask per (member, pass), flattened
// member-major. Drawing a mask set once per decision and reusing it across
// the candidate queries of that decision pairs the Monte Carlo noise, so
// candidate comparisons are driven by the inputs rather than by mask
// resampling.
inline std::vector<Eigen::VectorXd> draw_mask_set(const Ensemble& ensemble,
                                                  std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - ensemble.dropout_rate);
  std::vector<Eigen::VectorXd> masks;
  if (ensemble.dropout_rate <= 0.0) return masks;
  masks.reserve(ensemble.members.size() * size_t(ensemble.passes_per_member));
  for (const auto& net : ensemble.members)
    for (int p = 0; p < ensemble.passes_per_member; ++p) {
      Eigen::VectorXd mask(net.hidden_dim);
      for (Eigen::Index i = 0; i < net.hidden_dim; ++i)
        mask[i] = keep(rng) ? 1.0 : 0.0;
      masks.push_back(std::move(mask));
    }
  return masks;
}

// MC-Dropout inference with a caller-supplied mask set (empty = no dropout);
// returns the sample mean and unbiased sample variance of the pooled
// predictions. The provider supplies each pass's input, so stochastic input
// perturbations (sensor noise, dropped rows) are marginalized by the same
// Monte Carlo sum as the dropout masks.
template <class InputProvider>
PredictiveDistributiond mc_predict_masked(
    const Ensemble& ensemble, InputProvider&& next_input,
    const std::vector<Eigen::VectorXd>& masks, std::mt19937_64& rng) {
  std::vector<double> preds;
  preds.reserve(ensemble.members.size() * size_t(ensemble.passes_per_member));
  size_t mask_index = 0;
  for (const auto& net : ensemble.members) {
    for (int p = 0; p < ensemble.passes_per_member; ++p) {
      const ObservationSequenced seq = next_input(rng);
      if (!masks.empty()) {
        preds.push_back(lstm_forward(net, seq, &masks[mask_index++],
                                     ensemble.dropout_rate));
      } else {
        preds.push_back(lstm_forward(net, seq));
      }
    }
  }
  const double n = double(preds.size());
  double mean = 0.0;
  for (double p : preds) mean += p;
  mean /= n;
  double var = 0.0;
  if (preds.size() > 1) {
    for (double p : preds) var += (p - mean) * (p - mean);
    var /= (n - 1.0);
  }
  PredictiveDistributiond out;
  out.mean = mean;
  out.variance = var;
  out.total_variance = var;
  return out;
}

// Fresh masks per call (one independent MC estimate per query).
template <class InputProvider>
PredictiveDistributiond mc_predict_with(const Ensemble& ensemble,
                                        InputProvider&& next_input,
                                        std::mt19937_64& rng) {
  const auto masks = draw_mask_set(ensemble, rng);
  return mc_predict_masked(ensemble,
                           std::forward<InputProvider>(next_input), masks, rng);
}

inline PredictiveDistributiond mc_predict(const Ensemble& ensemble,
                                          const ObservationSequenced& seq,
                                          std::mt19937_64& rng) {
  return mc_predict_with(
      ensemble, [&](std::mt19937_64&) -> const ObservationSequenced& {
        return seq;
      },
      rng);
}

}  // namespace pbp

#endif  // PBP_LSTM_HPP
