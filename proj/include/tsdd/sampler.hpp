#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "tsdd/error.hpp"
#include "tsdd/patch_system.hpp"
#include "tsdd/random.hpp"

/// Random boundary data drawn from norm balls of the local trace spaces.
namespace tsdd::sampling {

enum class SamplerKind { elliptic_interior, elliptic_boundary, rte_interior, rte_boundary };

struct SamplerConfig {
    double R = 20.0;
    int D = 5;
    std::uint64_t seed = 0;
    SamplerKind kind = SamplerKind::elliptic_interior;
};

inline void validate(const SamplerConfig& cfg)
{
    if (!(cfg.R > 0.0) || !std::isfinite(cfg.R))
        throw ConfigError("sampling radius R must be positive");
    if (cfg.D < 1)
        throw ConfigError("radial exponent D must be >= 1");
}

/// A drawn trace together with the radius of its random part.
struct Sample {
    Vector phi;
    double r = 0.0;
};

/// Standard normal vector of length n.
inline Vector gaussian(RandomStream& rng, Eigen::Index n)
{
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
    return y;
}

/**
 * Uniform direction on {X : X^T W X = 1} with radial law (r / R)^D ~ U(0, 1).
 *
 * With W = L L^T, Z = L^{-T} Y for Gaussian Y satisfies Z^T W Z = |Y|^2, so
 * X = Z / |Y| is the image of a uniform Euclidean direction.
 */
class EllipticInteriorSampler {
public:
    EllipticInteriorSampler(const SamplerConfig& cfg, const Matrix& W) : cfg_(cfg), llt_(W)
    {
        validate(cfg);
        if (llt_.info() != Eigen::Success)
            throw ConfigError("H^1/2 weight matrix is not positive definite (bad node set)");
    }

    Sample sample(RandomStream& rng) const
    {
        const Vector y = gaussian(rng, llt_.rows());
        const Vector z = llt_.matrixU().solve(y);
        const double zn = y.norm();  // z^T W z = |y|^2
        const double r = cfg_.R * std::pow(rng.uniform(), 1.0 / cfg_.D);
        return {z * (r / zn), r};
    }

private:
    SamplerConfig cfg_;
    Eigen::LLT<Matrix> llt_;
};

/// Partitioned H^1/2 weight matrix with pinned physical values phi_d.
struct EllipsoidSpec {
    Matrix Wdd, Wdr, Wrd, Wrr;
    Vector phi_d;
};

/// Split W by the trace positions in `fixed` (ascending) and the rest.
inline EllipsoidSpec partition(const Matrix& W, const std::vector<Eigen::Index>& fixed, const Vector& phi_d)
{
    const Eigen::Index n = W.rows();
    std::vector<bool> is_fixed(static_cast<std::size_t>(n), false);
    for (auto k : fixed) {
        if (k < 0 || k >= n)
            throw ConfigError("fixed trace position out of range");
        is_fixed[static_cast<std::size_t>(k)] = true;
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < n; ++k)
        if (!is_fixed[static_cast<std::size_t>(k)])
            free.push_back(k);
    if (static_cast<Eigen::Index>(fixed.size()) != phi_d.size())
        throw ConfigError("fixed values do not match the fixed positions");
    EllipsoidSpec s;
    s.Wdd = W(fixed, fixed);
    s.Wdr = W(fixed, free);
    s.Wrd = W(free, fixed);
    s.Wrr = W(free, free);
    s.phi_d = phi_d;
    return s;
}

/**
 * Sampler for a patch touching the physical boundary.
 *
 * The free block is drawn around zero on the W_rr ellipsoid with
 * r^D ~ U(0, budget^{D/2}), budget = R^2 - phi_d^T (W_dd - W_dr W_rr^{-1} W_rd) phi_d.
 * Only phi_r^T W_rr phi_r <= budget is guaranteed; the full trace norm can
 * exceed R because phi_r is not shifted by the W-harmonic extension of phi_d.
 */
class EllipticBoundarySampler {
public:
    EllipticBoundarySampler(const SamplerConfig& cfg, EllipsoidSpec spec) : cfg_(cfg), spec_(std::move(spec))
    {
        validate(cfg);
        if (spec_.Wrr.rows() > 0) {
            llt_.compute(spec_.Wrr);
            if (llt_.info() != Eigen::Success)
                throw ConfigError("W_rr is not positive definite");
        }
        double quad = spec_.phi_d.dot(spec_.Wdd * spec_.phi_d);
        if (spec_.Wrr.rows() > 0) {
            const Vector t = spec_.Wrd * spec_.phi_d;
            quad -= t.dot(llt_.solve(t));
        }
        budget_ = cfg_.R * cfg_.R - quad;
        if (budget_ < -1e-12 * cfg_.R * cfg_.R)
            throw ConfigError("fixed boundary data exceeds sampling radius");
        budget_ = std::max(budget_, 0.0);
    }

    double budget() const { return budget_; }
    const EllipsoidSpec& spec() const { return spec_; }

    /// Returns (phi_d, phi_r) concatenated; r is the W_rr-norm of phi_r.
    Sample sample(RandomStream& rng) const
    {
        const Eigen::Index nd = spec_.phi_d.size(), nr = spec_.Wrr.rows();
        Vector phi(nd + nr);
        phi.head(nd) = spec_.phi_d;
        if (nr == 0)
            return {phi, 0.0};
        const Vector y = gaussian(rng, nr);
        const Vector z = llt_.matrixU().solve(y);
        const double zn = y.norm();
        const double r = std::sqrt(budget_) * std::pow(rng.uniform(), 1.0 / cfg_.D);
        phi.tail(nr) = z * (r / zn);
        return {phi, r};
    }

private:
    SamplerConfig cfg_;
    EllipsoidSpec spec_;
    Eigen::LLT<Matrix> llt_;
    double budget_ = 0.0;
};

inline Sample sample_elliptic_interior(const SamplerConfig& cfg, const Matrix& W, RandomStream& rng)
{
    return EllipticInteriorSampler(cfg, W).sample(rng);
}

inline Sample sample_elliptic_boundary(const SamplerConfig& cfg, const EllipsoidSpec& spec, RandomStream& rng)
{
    return EllipticBoundarySampler(cfg, spec).sample(rng);
}

/**
 * Nonnegative RTE trace in the weighted ball sum_k w_k phi_k^2 <= R^2.
 *
 * Positions with `fixed[k]` true keep `fixed_values[k]`; the free block is
 * X = |Z| / ||Z||_w with Z_k = Y_k / sqrt(w_k), scaled by r = R' sqrt(u) where
 * R' = sqrt(R^2 - ||fixed||_w^2).
 */
inline Sample sample_rte(const SamplerConfig& cfg, const Vector& weights, const std::vector<bool>& fixed,
                         const Vector& fixed_values, RandomStream& rng)
{
    validate(cfg);
    const Eigen::Index n = weights.size();
    if (static_cast<Eigen::Index>(fixed.size()) != n || fixed_values.size() != n)
        throw ConfigError("sample_rte: shape mismatch");
    double fixed2 = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
        if (fixed[static_cast<std::size_t>(k)]) {
            if (fixed_values[k] < 0.0)
                throw ConfigError("fixed RTE boundary data must be nonnegative");
            fixed2 += weights[k] * fixed_values[k] * fixed_values[k];
        }
    const double budget = cfg.R * cfg.R - fixed2;
    if (budget < -1e-12 * cfg.R * cfg.R)
        throw ConfigError("fixed boundary data exceeds sampling radius");
    const double radius = std::sqrt(std::max(budget, 0.0));

    Vector phi = Vector::Zero(n);
    double zn2 = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double y = rng.normal();
        if (fixed[static_cast<std::size_t>(k)]) {
            phi[k] = fixed_values[k];
            continue;
        }
        const double z = std::abs(y) / std::sqrt(weights[k]);
        phi[k] = z;
        zn2 += weights[k] * z * z;
    }
    const double r = radius * std::sqrt(rng.uniform());
    if (zn2 > 0.0) {
        const double scale = r / std::sqrt(zn2);
        for (Eigen::Index k = 0; k < n; ++k)
            if (!fixed[static_cast<std::size_t>(k)])
                phi[k] *= scale;
    }
    return {phi, r};
}

inline Sample sample_rte_interior(const SamplerConfig& cfg, const Vector& weights, RandomStream& rng)
{
    return sample_rte(cfg, weights, std::vector<bool>(static_cast<std::size_t>(weights.size()), false),
                      Vector::Zero(weights.size()), rng);
}

inline Sample sample_rte_boundary(const SamplerConfig& cfg, const Vector& weights, const std::vector<bool>& fixed,
                                  const Vector& fixed_values, RandomStream& rng)
{
    return sample_rte(cfg, weights, fixed, fixed_values, rng);
}

} // namespace tsdd::sampling
