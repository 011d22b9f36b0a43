#include "haaseg/training.hpp"

#include "haaseg/errors.hpp"
#include "haaseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace haaseg {

void validate(const TrainConfig& cfg) {
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr))
        throw ConfigError("train.lr must be a finite nonnegative number");
    if (!(cfg.weight_decay >= 0.0))
        throw ConfigError("train.weight_decay must be nonnegative");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0))
        throw ConfigError("train.beta1 must lie in [0, 1)");
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw ConfigError("train.beta2 must lie in [0, 1)");
    if (!(cfg.eps_adam > 0.0))
        throw ConfigError("train.eps_adam must be positive");
    if (!(cfg.clamp_eps > 0.0 && cfg.clamp_eps < 0.5))
        throw ConfigError("train.clamp_eps must lie in (0, 0.5)");
}

Tensor bce_loss(const Tensor& y, const Tensor& g, double clamp_eps) {
    if (y.shape() != g.shape())
        throw ShapeError("bce_loss: prediction " + shape_str(y.shape()) + " vs ground truth " +
                         shape_str(g.shape()));
    const auto yd = y.data(), gd = g.data();
    for (double v : gd)
        if (v != 0.0 && v != 1.0)
            throw ContractError("bce_loss: ground truth must be binary, found " + std::to_string(v));
    const double n = static_cast<double>(yd.size());
    const double lo = clamp_eps, hi = 1.0 - clamp_eps;
    double acc = 0.0;
    for (std::size_t i = 0; i < yd.size(); ++i) {
        const double p = std::clamp(yd[i], lo, hi);
        acc += gd[i] == 1.0 ? std::log(p) : std::log(1.0 - p);
    }
    Tensor out = Tensor::scalar(-acc / n);
    if (wants_grad(out, {&y})) {
        Tape::current()->record([yn = y.node_ptr(), gn = g.node_ptr(), on = out.node_ptr(), n, lo, hi] {
            if (on->grad.empty() || !yn->requires_grad)
                return;
            const double go = on->grad[0];
            auto gy = grad_of(*yn);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                const double p = yn->data[i];
                if (p < lo || p > hi)
                    continue;
                gy[i] += go * (gn->data[i] == 1.0 ? -1.0 / (n * p) : 1.0 / (n * (1.0 - p)));
            }
        });
    }
    return out;
}

AdamState make_adam_state(const ParamList& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor.shape());
        s.v.emplace_back(p.tensor.shape());
    }
    return s;
}

void adam_step(const ParamList& params, AdamState& state, const TrainConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ContractError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                            " tensors, given " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.m[i].shape() != params[i].tensor.shape() || state.v[i].shape() != params[i].tensor.shape())
            throw ContractError("adam_step: state for '" + params[i].name + "' has the wrong shape");

    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].tensor;
        auto pd = p.mutable_data();
        auto md = state.m[i].mutable_data();
        auto vd = state.v[i].mutable_data();
        const bool has_grad = p.has_grad();
        const auto gd = has_grad ? p.grad() : std::span<const double>{};
        for (std::size_t j = 0; j < pd.size(); ++j) {
            const double g = has_grad ? gd[j] : 0.0;
            pd[j] -= cfg.lr * cfg.weight_decay * pd[j];
            md[j] = cfg.beta1 * md[j] + (1.0 - cfg.beta1) * g;
            vd[j] = cfg.beta2 * vd[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = md[j] / c1;
            const double v_hat = vd[j] / c2;
            pd[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
        }
    }
}

namespace {

std::pair<double, double> gate_means(const HAANet& net) {
    if (net.encoder.empty())
        return {0.0, 0.0};
    double g1 = 0.0, g2 = 0.0;
    for (const auto& stage : net.encoder) {
        g1 += stage.block.gamma1.item();
        g2 += stage.block.gamma2.item();
    }
    const double n = static_cast<double>(net.encoder.size());
    return {g1 / n, g2 / n};
}

} // namespace

FitResult fit(HAANet& net, const std::vector<SegSample>& train, const std::vector<SegSample>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
    validate(cfg);
    if (train.empty())
        throw ConfigError("training set is empty");
    const ParamList params = net.parameters();
    AdamState state = make_adam_state(params);
    FitResult result;
    std::vector<std::size_t> order(train.size());

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, {0x666974, epoch}));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long>(i) - 1))]);

        double loss_sum = 0.0;
        for (std::size_t step = 0; step < order.size(); ++step) {
            const auto& sample = train[order[step]];
            for (const auto& p : params)
                Tensor(p.tensor).clear_grad();
            Tape tape;
            Tensor loss;
            {
                Tape::Scope scope(tape);
                loss = bce_loss(net_forward(sample.image, net), sample.mask, cfg.clamp_eps);
            }
            const double value = loss.item();
            if (!std::isfinite(value))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", sample " + sample.id);
            tape.backward(loss);
            adam_step(params, state, cfg);
            loss_sum += value;
            result.step_losses.push_back(value);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_loss = loss_sum / static_cast<double>(order.size());
        if (!val.empty())
            entry.val_dice = evaluate_dataset(net, val).dice;
        std::tie(entry.gamma1_mean, entry.gamma2_mean) = gate_means(net);
        result.epochs.push_back(entry);
        if (on_epoch)
            on_epoch(entry);
    }
    for (const auto& p : params)
        Tensor(p.tensor).clear_grad();
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,mean_loss,val_dice,gamma1_mean,gamma2_mean\n";
    char buf[160];
    for (const auto& e : log) {
        char dice[48] = "";
        if (e.val_dice)
            std::snprintf(dice, sizeof dice, "%.6f", *e.val_dice);
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%s,%.9g,%.9g\n", e.epoch, e.mean_loss, dice, e.gamma1_mean,
                      e.gamma2_mean);
        out += buf;
    }
    return out;
}

Tensor predict(const HAANet& net, const Tensor& image) {
    Tape::Pause pause;
    return net_forward(image, net);
}

MetricReport evaluate_dataset(const HAANet& net, const std::vector<SegSample>& samples) {
    if (samples.empty())
        throw ConfigError("evaluation set is empty");
    std::vector<Tensor> preds, gts;
    preds.reserve(samples.size());
    gts.reserve(samples.size());
    for (const auto& s : samples) {
        preds.push_back(predict(net, s.image));
        gts.push_back(s.mask);
    }
    MetricReport r = evaluate_predictions(preds, gts);
    const ParamReport pr = count_params(net);
    r.params_m = static_cast<double>(pr.total_params) / 1e6;
    r.macs_g = static_cast<double>(pr.total_macs_per_forward) / 1e9;
    return r;
}

} // namespace haaseg
