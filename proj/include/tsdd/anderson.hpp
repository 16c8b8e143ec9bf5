#pragma once

#include <deque>

#include <Eigen/Dense>

namespace tsdd {

/**
 * Anderson mixing for a fixed-point map x -> G(x).
 *
 * Keeps the last `depth` differences of iterates and residuals f = G(x) - x
 * and returns the extrapolated iterate
 *   x+ = x + beta f - (dX + beta dF) gamma,  gamma = argmin |f - dF gamma|.
 * depth = 0 degenerates to damped Picard iteration.
 */
class AndersonMixer {
public:
    explicit AndersonMixer(int depth = 5, double damping = 1.0) : depth_(depth), beta_(damping) {}

    Eigen::VectorXd update(const Eigen::VectorXd& x, const Eigen::VectorXd& gx)
    {
        const Eigen::VectorXd f = gx - x;
        if (has_prev_) {
            dx_.push_back(x - x_prev_);
            df_.push_back(f - f_prev_);
            if (static_cast<int>(dx_.size()) > depth_) {
                dx_.pop_front();
                df_.pop_front();
            }
        }
        x_prev_ = x;
        f_prev_ = f;
        has_prev_ = true;

        Eigen::VectorXd next = x + beta_ * f;
        const auto m = static_cast<Eigen::Index>(dx_.size());
        if (depth_ == 0 || m == 0)
            return next;
        Eigen::MatrixXd dF(x.size(), m), dX(x.size(), m);
        for (Eigen::Index c = 0; c < m; ++c) {
            dF.col(c) = df_[static_cast<std::size_t>(c)];
            dX.col(c) = dx_[static_cast<std::size_t>(c)];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dF);
        qr.setThreshold(1e-12);
        const Eigen::VectorXd gamma = qr.solve(f);
        if (!gamma.allFinite())
            return next;
        next -= (dX + beta_ * dF) * gamma;
        return next;
    }

    void reset()
    {
        dx_.clear();
        df_.clear();
        has_prev_ = false;
    }

private:
    int depth_;
    double beta_;
    bool has_prev_ = false;
    Eigen::VectorXd x_prev_, f_prev_;
    std::deque<Eigen::VectorXd> dx_, df_;
};

} // namespace tsdd
