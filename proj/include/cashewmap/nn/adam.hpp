#pragma once

#include <cmath>
#include <vector>

#include "cashewmap/nn/params.hpp"

namespace cashewmap::nn {

/// Adaptive-moment optimizer over a ParameterStore. Frozen groups are skipped and
/// keep their exact bit patterns.
template <typename T>
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    long steps() const { return t_; }

    void step(ParameterStore<T>& ps, const std::vector<T>& grad) {
        if (m_.size() != ps.total_size()) {
            m_.assign(ps.total_size(), 0.0);
            v_.assign(ps.total_size(), 0.0);
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        auto& values = ps.values();
        for (std::size_t p = 0; p < ps.count(); ++p) {
            const auto& info = ps.info(static_cast<int>(p));
            if (ps.frozen(info.group)) continue;
            for (std::size_t i = info.offset; i < info.offset + info.size; ++i) {
                const double g = grad[i];
                m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
                v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
                const double update = lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
                values[i] = static_cast<T>(values[i] - update);
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace cashewmap::nn
