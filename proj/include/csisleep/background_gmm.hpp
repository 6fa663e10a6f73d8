#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csisleep {

enum class PixelLabel : std::uint8_t { Background, Foreground };

struct GmmParams {
    int components = 3;               // K
    double learning_rate = 0.01;      // alpha
    double background_weight = 0.7;   // Theta
    double deviation_factor = 2.5;    // match radius, in standard deviations
    double initial_variance = 1.5;    // dBm^2, for seeded and replacement components
    double variance_floor = 0.05;     // dBm^2
    double seed_jitter = 0.1;         // dBm between seeded means

    void validate() const {
        if (components < 1) throw std::invalid_argument("GMM: K must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate < 1.0)) throw std::invalid_argument("GMM: alpha must lie in (0,1)");
        if (!(background_weight > 0.0 && background_weight <= 1.0)) {
            throw std::invalid_argument("GMM: Theta must lie in (0,1]");
        }
        if (!(deviation_factor > 0.0)) throw std::invalid_argument("GMM: deviation factor must be > 0");
        if (!(initial_variance > 0.0) || !(variance_floor > 0.0)) {
            throw std::invalid_argument("GMM: variances must be > 0");
        }
    }
};

// Univariate Gaussian density.
template <typename Scalar>
Scalar gaussian_density(Scalar x, Scalar mean, Scalar variance) {
    const Scalar d = x - mean;
    return std::exp(Scalar(-0.5) * d * d / variance) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * variance);
}

// A bank of independent K-component mixtures, one per (antenna, subcarrier)
// stream. Component parameters live column-wise in K x S arrays; each column
// is kept sorted by fitness w / sigma, descending.
//
// Concurrency: one writer per mixture column. Distinct columns may be updated
// concurrently; const queries need no writer on that column.
template <typename Scalar>
class BackgroundModel {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    BackgroundModel() = default;

    BackgroundModel(const GmmParams& params, int antennas, int subcarriers)
        : params_(params), antennas_(antennas), subcarriers_(subcarriers) {
        params_.validate();
        if (antennas < 1 || subcarriers < 1) throw std::invalid_argument("GMM: dims must be >= 1");
        const Eigen::Index k = params_.components;
        const Eigen::Index s = Eigen::Index(antennas) * subcarriers;
        weight_ = Array::Constant(k, s, Scalar(1) / Scalar(k));
        mean_ = Array::Zero(k, s);
        variance_ = Array::Constant(k, s, Scalar(params_.initial_variance));
        sd_ = variance_.sqrt();
        seeded_ = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(s, false);
    }

    const GmmParams& params() const { return params_; }
    int antennas() const { return antennas_; }
    int subcarriers() const { return subcarriers_; }
    int components() const { return params_.components; }
    Eigen::Index streams() const { return weight_.cols(); }

    Eigen::Index stream(int antenna, int subcarrier) const {
        return Eigen::Index(antenna) * subcarriers_ + subcarrier;
    }

    // Component views of one mixture, in fitness order.
    auto weights(Eigen::Index s) const { return weight_.col(s); }
    auto means(Eigen::Index s) const { return mean_.col(s); }
    auto variances(Eigen::Index s) const { return variance_.col(s); }
    bool seeded(Eigen::Index s) const { return seeded_(s); }

    // Mixture density sum_i w_i N(x; mu_i, sigma_i^2).
    Scalar probability(int antenna, int subcarrier, Scalar x) const {
        const auto s = stream(antenna, subcarrier);
        Scalar p = 0;
        for (Eigen::Index i = 0; i < weight_.rows(); ++i) {
            p += weight_(i, s) * gaussian_density(x, mean_(i, s), variance_(i, s));
        }
        return p;
    }

    // Size B of the smallest fitness-order prefix whose weight reaches Theta.
    int background_count(Eigen::Index s) const {
        const int k = params_.components;
        Scalar cum = 0;
        for (int i = 0; i < k; ++i) {
            cum += weight_(i, s);
            if (cum >= Scalar(params_.background_weight)) return i + 1;
        }
        return k;
    }

    // Weighted mean of the B background components.
    Scalar background_estimate(int antenna, int subcarrier) const {
        const auto s = stream(antenna, subcarrier);
        const int b = background_count(s);
        Scalar num = 0, den = 0;
        for (int i = 0; i < b; ++i) {
            num += weight_(i, s) * mean_(i, s);
            den += weight_(i, s);
        }
        return num / den;
    }

    // Labels x against the pre-update background set, then applies the online
    // update: least-fit replacement when nothing matches, otherwise the weight
    // decay toward the first match and its mean/variance refresh.
    PixelLabel classify_and_update(int antenna, int subcarrier, Scalar x) {
        return update_stream(stream(antenna, subcarrier), x);
    }

    PixelLabel update_stream(Eigen::Index s, Scalar x) {
        switch (params_.components) {
            case 1: return update_impl<1>(s, x);
            case 2: return update_impl<2>(s, x);
            case 3: return update_impl<3>(s, x);
            case 4: return update_impl<4>(s, x);
            case 5: return update_impl<5>(s, x);
            default: return update_impl<0>(s, x);
        }
    }

    // Labels every pixel of an M x N amplitude grid of one antenna, column by
    // column (sample order), updating the model as it goes.
    template <typename Derived>
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> classify_frame(int antenna,
                                                                      const Eigen::MatrixBase<Derived>& pixels) {
        if (pixels.rows() != subcarriers_) throw std::invalid_argument("GMM: frame row count != subcarriers");
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> fg(pixels.rows(), pixels.cols());
        const Eigen::Index base = stream(antenna, 0);
        for (Eigen::Index n = 0; n < pixels.cols(); ++n) {
            for (Eigen::Index m = 0; m < pixels.rows(); ++m) {
                fg(m, n) = update_stream(base + m, Scalar(pixels(m, n))) == PixelLabel::Foreground;
            }
        }
        return fg;
    }

    // Lossless text snapshot (hex floats).
    void save(std::ostream& out) const {
        out << "gmm,v1," << antennas_ << ',' << subcarriers_ << ',' << params_.components << ','
            << hex(params_.learning_rate) << ',' << hex(params_.background_weight) << ','
            << hex(params_.deviation_factor) << ',' << hex(params_.initial_variance) << ','
            << hex(params_.variance_floor) << ',' << hex(params_.seed_jitter) << '\n';
        for (Eigen::Index s = 0; s < streams(); ++s) {
            out << (seeded_(s) ? 1 : 0);
            for (Eigen::Index i = 0; i < weight_.rows(); ++i) {
                out << ',' << hex(weight_(i, s)) << ',' << hex(mean_(i, s)) << ',' << hex(variance_(i, s));
            }
            out << '\n';
        }
    }

    static BackgroundModel load(std::istream& in) {
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("GMM snapshot: empty input");
        auto fields = split_csv(line);
        if (fields.size() != 11 || fields[0] != "gmm" || fields[1] != "v1") {
            throw std::runtime_error("GMM snapshot: bad header");
        }
        GmmParams p;
        const int antennas = std::stoi(fields[2]);
        const int subcarriers = std::stoi(fields[3]);
        p.components = std::stoi(fields[4]);
        p.learning_rate = unhex(fields[5]);
        p.background_weight = unhex(fields[6]);
        p.deviation_factor = unhex(fields[7]);
        p.initial_variance = unhex(fields[8]);
        p.variance_floor = unhex(fields[9]);
        p.seed_jitter = unhex(fields[10]);
        BackgroundModel model(p, antennas, subcarriers);
        for (Eigen::Index s = 0; s < model.streams(); ++s) {
            if (!std::getline(in, line)) throw std::runtime_error("GMM snapshot: truncated");
            fields = split_csv(line);
            if (fields.size() != std::size_t(1 + 3 * p.components)) throw std::runtime_error("GMM snapshot: bad row");
            model.seeded_(s) = fields[0] == "1";
            for (int i = 0; i < p.components; ++i) {
                model.weight_(i, s) = Scalar(unhex(fields[1 + 3 * i]));
                model.mean_(i, s) = Scalar(unhex(fields[2 + 3 * i]));
                model.variance_(i, s) = Scalar(unhex(fields[3 + 3 * i]));
            }
        }
        model.sd_ = model.variance_.sqrt();
        return model;
    }

    bool operator==(const BackgroundModel& o) const {
        return antennas_ == o.antennas_ && subcarriers_ == o.subcarriers_ &&
               params_.components == o.params_.components && (weight_ == o.weight_).all() &&
               (mean_ == o.mean_).all() && (variance_ == o.variance_).all() && (seeded_ == o.seeded_).all();
    }

private:
    // Kc > 0 fixes the component count at compile time so the loops unroll.
    template <int Kc>
    PixelLabel update_impl(Eigen::Index s, Scalar x) {
        const int k = Kc > 0 ? Kc : params_.components;
        if (!seeded_(s)) seed(s, x);
        Scalar* w = weight_.col(s).data();
        Scalar* mu = mean_.col(s).data();
        Scalar* var = variance_.col(s).data();
        Scalar* sd = sd_.col(s).data();

        const Scalar radius = Scalar(params_.deviation_factor);
        const Scalar theta = Scalar(params_.background_weight);
        int first_match = -1;
        bool background = false;
        Scalar cum = 0;
        bool in_background = true;  // component i is inside the pre-update background prefix
        for (int i = 0; i < k; ++i) {
            if (std::abs(x - mu[i]) <= radius * sd[i]) {
                if (first_match < 0) first_match = i;
                if (in_background) background = true;
            }
            cum += w[i];
            if (cum >= theta) in_background = false;
        }

        const Scalar alpha = Scalar(params_.learning_rate);
        if (first_match < 0) {
            const int last = k - 1;
            mu[last] = x;
            var[last] = Scalar(params_.initial_variance);
            sd[last] = std::sqrt(var[last]);
            w[last] = Scalar(1) / Scalar(k);
            normalize<Kc>(w);
        } else {
            for (int i = 0; i < k; ++i) w[i] *= Scalar(1) - alpha;
            w[first_match] += alpha;
            normalize<Kc>(w);
            const int i = first_match;
            const Scalar rho = alpha / w[i];
            mu[i] = (Scalar(1) - rho) * mu[i] + rho * x;
            const Scalar d = x - mu[i];
            var[i] = std::max(Scalar(params_.variance_floor), (Scalar(1) - rho) * var[i] + rho * d * d);
            sd[i] = std::sqrt(var[i]);
        }
        sort_by_fitness<Kc>(w, mu, var, sd);
        return background ? PixelLabel::Background : PixelLabel::Foreground;
    }

    // Means start at x, x+j, x-j, x+2j, ... so the first match is well defined.
    void seed(Eigen::Index s, Scalar x) {
        const Scalar jitter = Scalar(params_.seed_jitter);
        for (int i = 0; i < params_.components; ++i) {
            const int step = (i + 1) / 2;
            const Scalar sign = (i % 2 == 1) ? Scalar(1) : Scalar(-1);
            mean_(i, s) = x + sign * Scalar(step) * jitter;
        }
        seeded_(s) = true;
    }

    template <int Kc>
    void normalize(Scalar* w) const {
        const int k = Kc > 0 ? Kc : params_.components;
        Scalar sum = 0;
        for (int i = 0; i < k; ++i) sum += w[i];
        const Scalar inv = Scalar(1) / sum;
        for (int i = 0; i < k; ++i) {
            w[i] *= inv;
            // decayed weights would otherwise go subnormal, which is very slow
            if (w[i] < std::numeric_limits<Scalar>::min()) w[i] = 0;
        }
    }

    // Stable insertion sort on w/sigma, K is tiny. Compares cross-multiplied.
    template <int Kc>
    void sort_by_fitness(Scalar* w, Scalar* mu, Scalar* var, Scalar* sd) const {
        const int k = Kc > 0 ? Kc : params_.components;
        for (int i = 1; i < k; ++i) {
            const Scalar wi = w[i], mi = mu[i], vi = var[i], si = sd[i];
            int j = i - 1;
            while (j >= 0 && w[j] * si < wi * sd[j]) {
                w[j + 1] = w[j];
                mu[j + 1] = mu[j];
                var[j + 1] = var[j];
                sd[j + 1] = sd[j];
                --j;
            }
            w[j + 1] = wi;
            mu[j + 1] = mi;
            var[j + 1] = vi;
            sd[j + 1] = si;
        }
    }

    static std::string hex(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%a", v);
        return buf;
    }
    static double unhex(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

    static std::vector<std::string> split_csv(const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) out.push_back(field);
        return out;
    }

    GmmParams params_;
    int antennas_ = 0;
    int subcarriers_ = 0;
    Array weight_;
    Array mean_;
    Array variance_;
    Array sd_;  // sqrt(variance_), kept in step
    Eigen::Array<bool, Eigen::Dynamic, 1> seeded_;
};

}  // namespace csisleep
