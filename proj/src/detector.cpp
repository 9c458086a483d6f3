#include "halluscope/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "halluscope/rng.hpp"

namespace halluscope {

std::vector<int> DetectionDataset::split_indices(bool train) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if ((is_train[i] != 0) == train) out.push_back(i);
    return out;
}

void DetectionDataset::assign_split(uint64_t seed, double train_fraction) {
    const int n = size();
    is_train.assign(n, 0);
    Rng rng(seed);
    const std::vector<int> perm = rng.permutation(n);
    const int n_train = static_cast<int>(std::lround(train_fraction * n));
    for (int i = 0; i < n_train && i < n; ++i) is_train[perm[i]] = 1;
}

std::vector<double> svar_score(const DetectionDataset& dataset, const LayerRange& range) {
    if (dataset.tokens.empty()) throw std::invalid_argument("empty dataset");
    std::vector<double> scores;
    scores.reserve(dataset.tokens.size());
    for (const auto& token : dataset.tokens) scores.push_back(svar(token.profile, range));
    return scores;
}

double internal_confidence(const LabeledToken& token, const Matrix& unembedding,
                           int object_token_id) {
    if (token.image_hidden.empty())
        throw std::invalid_argument("token has no captured image hidden states");
    if (object_token_id < 0 || object_token_id >= unembedding.rows)
        throw std::invalid_argument("object token id out of vocabulary range");
    double best = 0.0;
    for (const Matrix& states : token.image_hidden)
        for (int i = 0; i < states.rows; ++i) {
            const double p = lens_decode(states.row_span(i), unembedding).probs[object_token_id];
            best = std::max(best, p);
        }
    return best;
}

CurveReport roc_pr(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
    const int n = static_cast<int>(scores.size());
    int num_pos = 0;
    for (uint8_t l : labels) num_pos += l ? 1 : 0;
    const int num_neg = n - num_pos;
    if (num_pos == 0 || num_neg == 0)
        throw std::invalid_argument("both classes must be present for curve computation");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    CurveReport rep;
    double tp = 0.0, fp = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0, prev_recall = 0.0;
    double auroc = 0.0, ap = 0.0;

    int i = 0;
    while (i < n) {
        // Group ties at one threshold.
        int j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]]) tp += 1.0;
            else fp += 1.0;
            ++j;
        }
        const double fpr = fp / num_neg;
        const double tpr = tp / num_pos;
        const double prec = tp / (tp + fp);
        auroc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        ap += (tpr - prev_recall) * prec;
        rep.thresholds.push_back(scores[order[i]]);
        rep.fpr.push_back(fpr);
        rep.tpr.push_back(tpr);
        rep.precision.push_back(prec);
        rep.recall.push_back(tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
        prev_recall = tpr;
        i = j;
    }
    rep.auroc = auroc;
    rep.average_precision = ap;

    int correct = 0, tp_half = 0;
    for (int k2 = 0; k2 < n; ++k2) {
        const bool predicted_real = scores[k2] >= 0.5;
        if (predicted_real == (labels[k2] != 0)) ++correct;
        if (predicted_real && labels[k2]) ++tp_half;
    }
    rep.accuracy_at_half = static_cast<double>(correct) / n;
    rep.recall_at_half = static_cast<double>(tp_half) / num_pos;
    return rep;
}

namespace {

// Continued fraction for the incomplete beta function (Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpmin) d = kFpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpmin) d = kFpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpmin) c = kFpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpmin) d = kFpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpmin) c = kFpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

TTestResult t_test(const std::vector<double>& real_scores,
                   const std::vector<double>& halluc_scores) {
    const int n1 = static_cast<int>(real_scores.size());
    const int n2 = static_cast<int>(halluc_scores.size());
    if (n1 < 2 || n2 < 2) throw std::invalid_argument("t_test: each group needs >= 2 samples");

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / v.size();
    };
    const double m1 = mean(real_scores);
    const double m2 = mean(halluc_scores);
    auto ss = [](const std::vector<double>& v, double m) {
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return s;
    };
    const double df = n1 + n2 - 2;
    const double sp2 = (ss(real_scores, m1) + ss(halluc_scores, m2)) / df;
    if (sp2 == 0.0) throw std::invalid_argument("t_test: zero pooled variance");

    TTestResult res;
    res.df = df;
    res.t = (m1 - m2) / std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
    // One-tailed P(T_df >= t) via the regularized incomplete beta.
    const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + res.t * res.t));
    res.p = res.t >= 0.0 ? tail : 1.0 - tail;
    return res;
}

}  // namespace halluscope
