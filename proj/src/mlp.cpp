#include "halluscope/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "halluscope/rng.hpp"

namespace halluscope {

namespace {

void fill_uniform(Matrix& m, Rng& rng, double bound) {
    for (double& v : m.data) v = rng.uniform(-bound, bound);
}

std::vector<std::vector<double>> gather_features(const DetectionDataset& dataset,
                                                 const LayerRange& range,
                                                 const std::vector<int>& indices) {
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(dataset.tokens[i].profile.flatten(range));
    return out;
}

std::vector<int> gather_labels(const DetectionDataset& dataset, const std::vector<int>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(dataset.tokens[i].label == TokenLabel::real ? 1 : 0);
    return out;
}

}  // namespace

MlpClassifier make_mlp(int input_dim, int hidden_dim, double learning_rate, uint64_t seed) {
    if (input_dim <= 0 || hidden_dim <= 0) throw std::invalid_argument("mlp dims must be positive");
    MlpClassifier m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.learning_rate = learning_rate;
    m.seed = seed;
    Rng rng(seed);
    m.w1 = Matrix(hidden_dim, input_dim);
    m.w2 = Matrix(2, hidden_dim);
    fill_uniform(m.w1, rng, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    fill_uniform(m.w2, rng, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    m.b1.assign(hidden_dim, 0.0);
    m.b2.assign(2, 0.0);
    m.m_w1 = Matrix(hidden_dim, input_dim);
    m.v_w1 = Matrix(hidden_dim, input_dim);
    m.m_w2 = Matrix(2, hidden_dim);
    m.v_w2 = Matrix(2, hidden_dim);
    m.m_b1.assign(hidden_dim, 0.0);
    m.v_b1.assign(hidden_dim, 0.0);
    m.m_b2.assign(2, 0.0);
    m.v_b2.assign(2, 0.0);
    return m;
}

std::vector<double> MlpClassifier::predict_proba(std::span<const double> features) const {
    if (static_cast<int>(features.size()) != input_dim)
        throw std::invalid_argument("feature dim mismatch");
    std::vector<double> hidden(hidden_dim);
    for (int h = 0; h < hidden_dim; ++h) {
        double z = b1[h] + dot(w1.row_span(h), features);
        hidden[h] = z > 0.0 ? z : 0.0;
    }
    std::vector<double> logits(2);
    for (int c = 0; c < 2; ++c) logits[c] = b2[c] + dot(w2.row_span(c), hidden);
    softmax_inplace(logits);
    return logits;
}

double mlp_loss(const MlpClassifier& model, const std::vector<std::vector<double>>& features,
                const std::vector<int>& labels, MlpGradients* gradients) {
    const int batch = static_cast<int>(features.size());
    if (batch == 0) throw std::invalid_argument("empty batch");
    if (gradients) {
        gradients->w1 = Matrix(model.hidden_dim, model.input_dim);
        gradients->w2 = Matrix(2, model.hidden_dim);
        gradients->b1.assign(model.hidden_dim, 0.0);
        gradients->b2.assign(2, 0.0);
    }

    double loss = 0.0;
    std::vector<double> hidden(model.hidden_dim), pre(model.hidden_dim);
    for (int s = 0; s < batch; ++s) {
        const std::vector<double>& x = features[s];
        for (int h = 0; h < model.hidden_dim; ++h) {
            pre[h] = model.b1[h] + dot(model.w1.row_span(h), x);
            hidden[h] = pre[h] > 0.0 ? pre[h] : 0.0;
        }
        std::vector<double> probs(2);
        for (int c = 0; c < 2; ++c) probs[c] = model.b2[c] + dot(model.w2.row_span(c), hidden);
        softmax_inplace(probs);
        const int y = labels[s];
        loss -= std::log(std::max(probs[y], 1e-300));

        if (gradients) {
            // dL/dlogit = (p - onehot) / batch
            double dlogit[2];
            for (int c = 0; c < 2; ++c) dlogit[c] = (probs[c] - (c == y ? 1.0 : 0.0)) / batch;
            for (int c = 0; c < 2; ++c) {
                gradients->b2[c] += dlogit[c];
                double* g2 = gradients->w2.row(c);
                for (int h = 0; h < model.hidden_dim; ++h) g2[h] += dlogit[c] * hidden[h];
            }
            for (int h = 0; h < model.hidden_dim; ++h) {
                if (pre[h] <= 0.0) continue;
                const double dh = dlogit[0] * model.w2.at(0, h) + dlogit[1] * model.w2.at(1, h);
                gradients->b1[h] += dh;
                double* g1 = gradients->w1.row(h);
                for (int i = 0; i < model.input_dim; ++i) g1[i] += dh * x[i];
            }
        }
    }
    return loss / batch;
}

namespace {

void adam_step(double& param, double& m, double& v, double grad, double lr, double beta1,
               double beta2, double eps, double bias1, double bias2) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    param -= lr * (m / bias1) / (std::sqrt(v / bias2) + eps);
}

}  // namespace

void adam_update(MlpClassifier& model, const MlpGradients& gradients, const MlpHyperParams& hyper) {
    model.step_count += 1;
    const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(model.step_count));
    const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(model.step_count));
    const double lr = model.learning_rate;
    for (size_t i = 0; i < model.w1.data.size(); ++i)
        adam_step(model.w1.data[i], model.m_w1.data[i], model.v_w1.data[i], gradients.w1.data[i],
                  lr, hyper.beta1, hyper.beta2, hyper.adam_eps, bias1, bias2);
    for (size_t i = 0; i < model.w2.data.size(); ++i)
        adam_step(model.w2.data[i], model.m_w2.data[i], model.v_w2.data[i], gradients.w2.data[i],
                  lr, hyper.beta1, hyper.beta2, hyper.adam_eps, bias1, bias2);
    for (size_t i = 0; i < model.b1.size(); ++i)
        adam_step(model.b1[i], model.m_b1[i], model.v_b1[i], gradients.b1[i], lr, hyper.beta1,
                  hyper.beta2, hyper.adam_eps, bias1, bias2);
    for (size_t i = 0; i < model.b2.size(); ++i)
        adam_step(model.b2[i], model.m_b2[i], model.v_b2[i], gradients.b2[i], lr, hyper.beta1,
                  hyper.beta2, hyper.adam_eps, bias1, bias2);
}

namespace {

MlpMetrics evaluate_on(const MlpClassifier& model, const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels) {
    const int n = static_cast<int>(features.size());
    if (n == 0) throw std::invalid_argument("empty evaluation split");
    std::vector<double> real_probs(n);
    std::vector<uint8_t> lab(n);
    int correct = 0, tp = 0, pos = 0;
    for (int i = 0; i < n; ++i) {
        const std::vector<double> p = model.predict_proba(features[i]);
        real_probs[i] = p[1];
        lab[i] = static_cast<uint8_t>(labels[i]);
        const int pred = p[1] > p[0] ? 1 : 0;
        if (pred == labels[i]) ++correct;
        if (labels[i] == 1) {
            ++pos;
            if (pred == 1) ++tp;
        }
    }
    MlpMetrics metrics;
    metrics.accuracy = static_cast<double>(correct) / n;
    metrics.recall = pos > 0 ? static_cast<double>(tp) / pos : 0.0;
    metrics.auroc = roc_pr(real_probs, lab).auroc;
    return metrics;
}

// Grid-search selection metric; accuracy only, so single-class test splits
// cannot derail candidate scoring.
double accuracy_on(const MlpClassifier& model, const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels) {
    int correct = 0;
    for (size_t i = 0; i < features.size(); ++i) {
        const std::vector<double> p = model.predict_proba(features[i]);
        if ((p[1] > p[0] ? 1 : 0) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / features.size();
}

MlpClassifier train_single(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, int input_dim, int hidden, double lr,
                           int epochs, const MlpHyperParams& hyper, uint64_t seed) {
    MlpClassifier model = make_mlp(input_dim, hidden, lr, seed);
    MlpGradients grads;
    for (int e = 0; e < epochs; ++e) {
        mlp_loss(model, features, labels, &grads);
        adam_update(model, grads, hyper);
    }
    return model;
}

}  // namespace

MlpClassifier train_mlp(const DetectionDataset& dataset, const LayerRange& range,
                        const MlpHyperParams& hyper, uint64_t seed) {
    if (dataset.is_train.size() != dataset.tokens.size())
        throw std::invalid_argument("dataset has no split assignment");
    const std::vector<int> train_idx = dataset.split_indices(true);
    const std::vector<int> test_idx = dataset.split_indices(false);
    if (train_idx.empty()) throw std::invalid_argument("empty train split");
    if (hyper.hidden_sizes.empty() || hyper.learning_rates.empty())
        throw std::invalid_argument("empty hyperparameter grid");

    const auto train_x = gather_features(dataset, range, train_idx);
    const auto train_y = gather_labels(dataset, train_idx);
    bool has_real = false, has_halluc = false;
    for (int y : train_y) (y == 1 ? has_real : has_halluc) = true;
    if (!has_real || !has_halluc)
        throw std::invalid_argument("train split is single-class");

    const auto test_x = gather_features(dataset, range, test_idx);
    const auto test_y = gather_labels(dataset, test_idx);
    const int input_dim = static_cast<int>(train_x[0].size());

    MlpClassifier best;
    double best_acc = -1.0;
    int cell = 0;
    for (double lr : hyper.learning_rates) {
        for (int hidden : hyper.hidden_sizes) {
            const uint64_t cell_seed = splitmix64(seed ^ static_cast<uint64_t>(cell));
            MlpClassifier model = train_single(train_x, train_y, input_dim, hidden, lr,
                                               hyper.epochs, hyper, cell_seed);
            const double acc = test_x.empty() ? accuracy_on(model, train_x, train_y)
                                              : accuracy_on(model, test_x, test_y);
            const bool better =
                acc > best_acc ||
                (acc == best_acc && best_acc >= 0.0 && hidden < best.hidden_dim);
            if (better) {
                best = std::move(model);
                best_acc = acc;
            }
            ++cell;
        }
    }
    best.feature_range = range;
    return best;
}

MlpMetrics evaluate_mlp(const MlpClassifier& model, const DetectionDataset& dataset,
                        bool on_train_split) {
    const std::vector<int> idx = dataset.split_indices(on_train_split);
    const auto x = gather_features(dataset, model.feature_range, idx);
    const auto y = gather_labels(dataset, idx);
    return evaluate_on(model, x, y);
}

}  // namespace halluscope
