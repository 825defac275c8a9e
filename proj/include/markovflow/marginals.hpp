#pragma once

#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "markovflow/grid.hpp"

namespace markovflow {

/// Target distribution of the price at one maturity.
class Marginal {
public:
    virtual ~Marginal() = default;

    virtual double cdf(double y) const = 0;
    /// Right-inverse of cdf; throws out-of-range-probability outside (0,1).
    virtual double quantile(double q) const = 0;
    /// 1 - cdf(y), accurate in the upper tail where overridden.
    virtual double sf(double y) const { return 1.0 - cdf(y); }
    /// quantile(1 - s), accurate for small s where overridden.
    virtual double upper_quantile(double s) const { return quantile(1.0 - s); }
    /// Undiscounted call E[(Y-K)^+].
    virtual double call(double strike) const = 0;
    virtual double density(double y) const = 0;
    virtual double mean() const = 0;

    virtual std::string kind() const = 0;
    virtual nlohmann::json to_json() const = 0;

    QuantileFn quantile_fn() const {
        return [this](double q) { return quantile(q); };
    }
    QuantileFn upper_quantile_fn() const {
        return [this](double s) { return upper_quantile(s); };
    }
};

/// Tail-accurate quantile matching of a CDF onto a marginal.
FlowSlice compose_quantile_cdf(const Marginal& target, const MonotoneCdf& flow_cdf);

using MarginalPtr = std::shared_ptr<const Marginal>;

// ---------------------------------------------------------------------------
// Double-exponential family p(t,y) = lambda/2 exp(-lambda |y|).

struct DoubleExponential {
    double t = 1.0;
    double lambda = 1.0;
    double lambda_dot = -0.5;  ///< d lambda / dt, negative

    /// The lambda(t) = 1/sqrt(t) member.
    static DoubleExponential inverse_sqrt(double t);
};

double de_call(const DoubleExponential& d, double strike) noexcept;
double de_cdf(const DoubleExponential& d, double y) noexcept;
double de_quantile(const DoubleExponential& d, double q);
double de_density(const DoubleExponential& d, double y) noexcept;
/// Bachelier-type local variance 2(1+lambda|y|)(-lambda_dot)/lambda^3.
double de_local_variance(const DoubleExponential& d, double y) noexcept;
/// Flow function obtained by integrating dx = df / sigma_loc(f) from the origin.
double de_flow(const DoubleExponential& d, double x) noexcept;

/// lambda(t) = 1/sqrt(t) shorthands; throw nonpositive-time for t <= 0.
double de_local_variance(double t, double y);
double de_local_vol(double t, double y);
double de_flow(double t, double x);

class DoubleExponentialMarginal final : public Marginal {
public:
    explicit DoubleExponentialMarginal(DoubleExponential params);

    double cdf(double y) const override { return de_cdf(p_, y); }
    double quantile(double q) const override;
    double sf(double y) const override { return de_cdf(p_, -y); }
    double upper_quantile(double s) const override { return -de_quantile(p_, s); }
    double call(double strike) const override { return de_call(p_, strike); }
    double density(double y) const override { return de_density(p_, y); }
    double mean() const override { return 0.0; }
    std::string kind() const override { return "double_exponential"; }
    nlohmann::json to_json() const override;

    const DoubleExponential& params() const noexcept { return p_; }

private:
    DoubleExponential p_;
};

class NormalMarginal final : public Marginal {
public:
    NormalMarginal(double mean, double variance);

    double cdf(double y) const override;
    double quantile(double q) const override;
    double sf(double y) const override;
    double upper_quantile(double s) const override;
    double call(double strike) const override;
    double density(double y) const override;
    double mean() const override { return mean_; }
    std::string kind() const override { return "normal"; }
    nlohmann::json to_json() const override;

    double variance() const noexcept { return variance_; }

private:
    double mean_;
    double variance_;
};

// ---------------------------------------------------------------------------
// Mixed lognormal.

struct MlnParams {
    std::vector<double> weights;
    std::vector<double> forwards;
    std::vector<double> vols;

    std::size_t n_modes() const noexcept { return weights.size(); }
    double forward() const noexcept;
    /// Throws invalid-argument unless weights >= 0 sum to 1 and forwards, vols > 0.
    void validate() const;
};

double mln_call(const MlnParams& p, double T, double strike) noexcept;
double mln_cdf(const MlnParams& p, double T, double y) noexcept;
double mln_sf(const MlnParams& p, double T, double y) noexcept;
double mln_density(const MlnParams& p, double T, double y) noexcept;
/// Bracketed root-find of the mixture CDF; throws root-find-failure.
double mln_quantile(const MlnParams& p, double T, double q);
/// Level y with mln_sf(y) = s.
double mln_upper_quantile(const MlnParams& p, double T, double s);

class MlnMarginal final : public Marginal {
public:
    MlnMarginal(MlnParams params, double T);

    double cdf(double y) const override { return mln_cdf(p_, T_, y); }
    double quantile(double q) const override { return mln_quantile(p_, T_, q); }
    double sf(double y) const override { return mln_sf(p_, T_, y); }
    double upper_quantile(double s) const override { return mln_upper_quantile(p_, T_, s); }
    double call(double strike) const override { return mln_call(p_, T_, strike); }
    double density(double y) const override { return mln_density(p_, T_, y); }
    double mean() const override { return p_.forward(); }
    std::string kind() const override { return "mln"; }
    nlohmann::json to_json() const override;

    const MlnParams& params() const noexcept { return p_; }
    double maturity() const noexcept { return T_; }

private:
    MlnParams p_;
    double T_;
};

/// Black-Scholes marginal at T: one-mode mixture with forward `spot` and vol `sigma`.
MarginalPtr make_lognormal(double spot, double sigma, double T);

/// CDF tabulated on a positive strike grid, lognormal tails matched in level and
/// slope at both boundary strikes.
class TabulatedMarginal final : public Marginal {
public:
    TabulatedMarginal(Vector strikes, Vector cdf);

    double cdf(double y) const override;
    double quantile(double q) const override;
    double sf(double y) const override;
    double upper_quantile(double s) const override;
    double call(double strike) const override;
    double density(double y) const override;
    double mean() const override { return mean_; }
    std::string kind() const override { return "tabulated"; }
    nlohmann::json to_json() const override;

    const Vector& strikes() const noexcept { return k_; }
    const Vector& cdf_values() const noexcept { return F_; }

private:
    struct Tail {
        double m;
        double s;
    };
    double upper_tail_call(double strike) const;
    double lower_tail_put(double strike) const;

    Vector k_;
    Vector F_;
    Vector upper_integral_;  ///< \int_{k_j}^{k_n} (1 - F) on the grid
    Tail lower_{};
    Tail upper_{};
    double mean_ = 0.0;
};

MarginalPtr marginal_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

struct MarginalSet {
    double spot = 0.0;
    std::vector<double> maturities;
    std::vector<MarginalPtr> marginals;

    std::size_t size() const noexcept { return maturities.size(); }
    /// Throws invalid-argument when maturities are not strictly increasing and positive.
    void validate() const;
};

nlohmann::json to_json(const MarginalSet& set);
MarginalSet marginal_set_from_json(const nlohmann::json& j);

/// Double-exponential fixture with lambda = 1/sqrt(t). Throws invalid-argument on
/// an unsorted or nonpositive maturity list.
MarginalSet make_double_exponential_set(const std::vector<double>& maturities);

struct ConvexOrderViolation {
    std::size_t pair;  ///< violation between maturities pair and pair+1
    double strike;
    double deficit;  ///< call(T_pair) - call(T_pair+1) > 0
};

struct ConvexOrderReport {
    std::vector<ConvexOrderViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

inline constexpr double kConvexOrderSlack = 1e-10;

ConvexOrderReport check_convex_order(const MarginalSet& set, const Vector& strikes);

}  // namespace markovflow
