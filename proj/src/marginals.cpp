#include "markovflow/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "markovflow/error.hpp"
#include "markovflow/normal.hpp"

namespace markovflow {

namespace {

void check_probability(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw Error(ErrorKind::out_of_range_probability, "quantile level must lie in (0,1)");
    }
}

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

// ---------------------------------------------------------------------------

DoubleExponential DoubleExponential::inverse_sqrt(double t) {
    if (!(t > 0.0)) throw Error(ErrorKind::nonpositive_time, "double-exponential needs t > 0");
    return {t, 1.0 / std::sqrt(t), -0.5 * std::pow(t, -1.5)};
}

double de_call(const DoubleExponential& d, double strike) noexcept {
    return std::max(-strike, 0.0) + std::exp(-d.lambda * std::abs(strike)) / (2.0 * d.lambda);
}

double de_cdf(const DoubleExponential& d, double y) noexcept {
    return y >= 0.0 ? 1.0 - 0.5 * std::exp(-d.lambda * y) : 0.5 * std::exp(d.lambda * y);
}

double de_quantile(const DoubleExponential& d, double q) {
    check_probability(q);
    return q >= 0.5 ? -std::log(2.0 * (1.0 - q)) / d.lambda : std::log(2.0 * q) / d.lambda;
}

double de_density(const DoubleExponential& d, double y) noexcept {
    return 0.5 * d.lambda * std::exp(-d.lambda * std::abs(y));
}

double de_local_variance(const DoubleExponential& d, double y) noexcept {
    return 2.0 * (1.0 + d.lambda * std::abs(y)) * (-d.lambda_dot) / (d.lambda * d.lambda * d.lambda);
}

double de_flow(const DoubleExponential& d, double x) noexcept {
    const double a = 1.0 + std::sqrt(-d.lambda_dot / (2.0 * d.lambda)) * std::abs(x);
    return std::copysign((a * a - 1.0) / d.lambda, x);
}

double de_local_variance(double t, double y) {
    return de_local_variance(DoubleExponential::inverse_sqrt(t), y);
}

double de_local_vol(double t, double y) { return std::sqrt(de_local_variance(t, y)); }

double de_flow(double t, double x) { return de_flow(DoubleExponential::inverse_sqrt(t), x); }

FlowSlice compose_quantile_cdf(const Marginal& target, const MonotoneCdf& flow_cdf) {
    return compose_quantile_cdf(target.quantile_fn(), target.upper_quantile_fn(), flow_cdf);
}

DoubleExponentialMarginal::DoubleExponentialMarginal(DoubleExponential params) : p_(params) {
    if (!(p_.lambda > 0.0) || !(p_.lambda_dot < 0.0)) {
        throw Error(ErrorKind::invalid_argument, "double-exponential needs lambda > 0, lambda_dot < 0");
    }
}

double DoubleExponentialMarginal::quantile(double q) const { return de_quantile(p_, q); }

nlohmann::json DoubleExponentialMarginal::to_json() const {
    return {{"kind", kind()},
            {"params", {{"t", p_.t}, {"lambda", p_.lambda}, {"lambda_dot", p_.lambda_dot}}}};
}

// ---------------------------------------------------------------------------

NormalMarginal::NormalMarginal(double mean, double variance) : mean_(mean), variance_(variance) {
    if (!(variance > 0.0)) throw Error(ErrorKind::degenerate_marginal, "normal needs variance > 0");
}

double NormalMarginal::cdf(double y) const { return norm_cdf((y - mean_) / std::sqrt(variance_)); }

double NormalMarginal::quantile(double q) const {
    check_probability(q);
    return mean_ + std::sqrt(variance_) * norm_quantile(q);
}

double NormalMarginal::sf(double y) const { return norm_cdf(-(y - mean_) / std::sqrt(variance_)); }

double NormalMarginal::upper_quantile(double s) const {
    check_probability(s);
    return mean_ - std::sqrt(variance_) * norm_quantile(s);
}

double NormalMarginal::call(double strike) const {
    return bachelier_call(mean_, std::sqrt(variance_), strike);
}

double NormalMarginal::density(double y) const {
    const double sd = std::sqrt(variance_);
    return norm_pdf((y - mean_) / sd) / sd;
}

nlohmann::json NormalMarginal::to_json() const {
    return {{"kind", kind()}, {"params", {{"mean", mean_}, {"variance", variance_}}}};
}

// ---------------------------------------------------------------------------

double MlnParams::forward() const noexcept {
    double f = 0.0;
    for (std::size_t j = 0; j < n_modes(); ++j) f += weights[j] * forwards[j];
    return f;
}

void MlnParams::validate() const {
    if (weights.empty() || forwards.size() != weights.size() || vols.size() != weights.size()) {
        throw Error(ErrorKind::invalid_argument, "MLN parameter arrays must be non-empty and equal length");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n_modes(); ++j) {
        if (!(weights[j] >= 0.0) || !(forwards[j] > 0.0) || !(vols[j] > 0.0)) {
            throw Error(ErrorKind::invalid_argument, "MLN needs w >= 0, F > 0, s > 0");
        }
        total += weights[j];
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw Error(ErrorKind::invalid_argument, "MLN weights must sum to 1");
    }
}

double mln_call(const MlnParams& p, double T, double strike) noexcept {
    double c = 0.0;
    const double rt = std::sqrt(T);
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        c += p.weights[j] * black_call(p.forwards[j], p.vols[j] * rt, strike);
    }
    return c;
}

double mln_cdf(const MlnParams& p, double T, double y) noexcept {
    if (y <= 0.0) return 0.0;
    double c = 0.0;
    const double rt = std::sqrt(T);
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        const double s = p.vols[j] * rt;
        c += p.weights[j] * norm_cdf((std::log(y / p.forwards[j]) + 0.5 * s * s) / s);
    }
    return c;
}

double mln_sf(const MlnParams& p, double T, double y) noexcept {
    if (y <= 0.0) return 1.0;
    double c = 0.0;
    const double rt = std::sqrt(T);
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        const double s = p.vols[j] * rt;
        c += p.weights[j] * norm_cdf(-(std::log(y / p.forwards[j]) + 0.5 * s * s) / s);
    }
    return c;
}

double mln_density(const MlnParams& p, double T, double y) noexcept {
    if (y <= 0.0) return 0.0;
    double d = 0.0;
    const double rt = std::sqrt(T);
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        const double s = p.vols[j] * rt;
        d += p.weights[j] * norm_pdf((std::log(y / p.forwards[j]) + 0.5 * s * s) / s) / (s * y);
    }
    return d;
}

namespace {

// Root of the mixture CDF (or survival function when `upper`) at level `level`,
// bracketed by the extreme per-mode quantiles; bisection in log-space with
// safeguarded Newton steps.
double mln_root(const MlnParams& p, double T, double level, bool upper) {
    check_probability(level);
    const double rt = std::sqrt(T);
    const double z = upper ? -norm_quantile(level) : norm_quantile(level);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        if (p.weights[j] <= 0.0) continue;
        const double s = p.vols[j] * rt;
        const double lq = std::log(p.forwards[j]) - 0.5 * s * s + s * z;
        lo = std::min(lo, lq);
        hi = std::max(hi, lq);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw Error(ErrorKind::root_find_failure, "MLN quantile bracket is not finite");
    }
    if (hi - lo < 1e-15) return std::exp(lo);
    lo -= 1e-12;
    hi += 1e-12;
    const double tol = 1e-12 * (upper ? level : std::min(level, 1.0 - level));
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double y = std::exp(x);
        // g increases with x in both cases
        const double g = upper ? level - mln_sf(p, T, y) : mln_cdf(p, T, y) - level;
        if (std::abs(g) <= tol) return y;
        if (g < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo < 1e-15) return std::exp(0.5 * (lo + hi));
        const double slope = mln_density(p, T, y) * y;
        double next = slope > 0.0 ? x - g / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    throw Error(ErrorKind::root_find_failure, "MLN quantile did not converge");
}

}  // namespace

double mln_quantile(const MlnParams& p, double T, double q) { return mln_root(p, T, q, false); }

double mln_upper_quantile(const MlnParams& p, double T, double s) { return mln_root(p, T, s, true); }

MlnMarginal::MlnMarginal(MlnParams params, double T) : p_(std::move(params)), T_(T) {
    p_.validate();
    if (!(T > 0.0)) throw Error(ErrorKind::nonpositive_time, "MLN marginal needs T > 0");
}

nlohmann::json MlnMarginal::to_json() const {
    return {{"kind", kind()},
            {"params",
             {{"T", T_}, {"weights", p_.weights}, {"forwards", p_.forwards}, {"vols", p_.vols}}}};
}

MarginalPtr make_lognormal(double spot, double sigma, double T) {
    return std::make_shared<MlnMarginal>(MlnParams{{1.0}, {spot}, {sigma}}, T);
}

// ---------------------------------------------------------------------------

TabulatedMarginal::TabulatedMarginal(Vector strikes, Vector cdf)
    : k_(std::move(strikes)), F_(std::move(cdf)) {
    const Index n = k_.size();
    if (n < 3 || F_.size() != n) {
        throw Error(ErrorKind::invalid_argument, "tabulated marginal needs >= 3 matching nodes");
    }
    if (!(k_[0] > 0.0)) throw Error(ErrorKind::invalid_argument, "tabulated strikes must be positive");
    for (Index j = 1; j < n; ++j) {
        if (!(k_[j] > k_[j - 1]) || F_[j] < F_[j - 1]) {
            throw Error(ErrorKind::invalid_argument, "tabulated strikes increasing, CDF nondecreasing");
        }
    }
    if (!(F_[0] > 0.0) || !(F_[n - 1] < 1.0)) {
        throw Error(ErrorKind::degenerate_marginal, "tabulated CDF must stay inside (0,1) at the ends");
    }
    // Tails: ln Y ~ N(m, s^2) matched to F and dF/dK at the boundary strike.
    auto fit_tail = [](double k, double F, double dens) {
        if (!(dens > 0.0)) throw Error(ErrorKind::degenerate_marginal, "zero boundary density");
        const double z = norm_quantile(F);
        const double s = norm_pdf(z) / (k * dens);
        return Tail{std::log(k) - s * z, s};
    };
    lower_ = fit_tail(k_[0], F_[0], (F_[1] - F_[0]) / (k_[1] - k_[0]));
    upper_ = fit_tail(k_[n - 1], F_[n - 1], (F_[n - 1] - F_[n - 2]) / (k_[n - 1] - k_[n - 2]));

    upper_integral_ = Vector::Zero(n);
    for (Index j = n - 2; j >= 0; --j) {
        upper_integral_[j] = upper_integral_[j + 1] +
                             0.5 * (k_[j + 1] - k_[j]) * ((1.0 - F_[j]) + (1.0 - F_[j + 1]));
    }
    mean_ = call(0.0);
}

double TabulatedMarginal::upper_tail_call(double strike) const {
    const double s = upper_.s;
    const double d1 = (upper_.m + s * s - std::log(strike)) / s;
    return std::exp(upper_.m + 0.5 * s * s) * norm_cdf(d1) - strike * norm_cdf(d1 - s);
}

double TabulatedMarginal::lower_tail_put(double strike) const {
    if (strike <= 0.0) return 0.0;
    const double s = lower_.s;
    const double d1 = (lower_.m + s * s - std::log(strike)) / s;
    return strike * norm_cdf(-(d1 - s)) - std::exp(lower_.m + 0.5 * s * s) * norm_cdf(-d1);
}

double TabulatedMarginal::cdf(double y) const {
    const Index n = k_.size();
    if (y <= 0.0) return 0.0;
    if (y < k_[0]) return norm_cdf((std::log(y) - lower_.m) / lower_.s);
    if (y > k_[n - 1]) return norm_cdf((std::log(y) - upper_.m) / upper_.s);
    return interp_linear(k_, F_, y);
}

double TabulatedMarginal::quantile(double q) const {
    check_probability(q);
    const Index n = k_.size();
    if (q < F_[0]) return std::exp(lower_.m + lower_.s * norm_quantile(q));
    if (q > F_[n - 1]) return std::exp(upper_.m + upper_.s * norm_quantile(q));
    const double* first = F_.data();
    const Index a = std::lower_bound(first, first + n, q) - first;
    const Index b = (std::upper_bound(first, first + n, q) - first) - 1;
    if (F_[a] == q) return 0.5 * (k_[a] + k_[std::max(a, b)]);
    const double t = (q - F_[a - 1]) / (F_[a] - F_[a - 1]);
    return k_[a - 1] + t * (k_[a] - k_[a - 1]);
}

double TabulatedMarginal::sf(double y) const {
    const Index n = k_.size();
    if (y > k_[n - 1]) return norm_cdf(-(std::log(y) - upper_.m) / upper_.s);
    return 1.0 - cdf(y);
}

double TabulatedMarginal::upper_quantile(double s) const {
    check_probability(s);
    const Index n = k_.size();
    if (s < 1.0 - F_[n - 1]) return std::exp(upper_.m - upper_.s * norm_quantile(s));
    return quantile(1.0 - s);
}

double TabulatedMarginal::density(double y) const {
    const Index n = k_.size();
    if (y <= 0.0) return 0.0;
    auto ln_density = [y](const Tail& t) {
        return norm_pdf((std::log(y) - t.m) / t.s) / (t.s * y);
    };
    if (y < k_[0]) return ln_density(lower_);
    if (y > k_[n - 1]) return ln_density(upper_);
    const Index j = std::min<Index>(
        (std::upper_bound(k_.data(), k_.data() + n, y) - k_.data()) - 1, n - 2);
    return (F_[j + 1] - F_[j]) / (k_[j + 1] - k_[j]);
}

double TabulatedMarginal::call(double strike) const {
    const Index n = k_.size();
    const double top = upper_tail_call(k_[n - 1]);
    if (strike >= k_[n - 1]) return upper_tail_call(strike);
    if (strike < k_[0]) {
        // C(K) = C(k0) + (k0 - K) - \int_K^{k0} F, with F lognormal below k0.
        const double c0 = upper_integral_[0] + top;
        return c0 + (k_[0] - strike) - (lower_tail_put(k_[0]) - lower_tail_put(strike));
    }
    const Index j = std::min<Index>(
        (std::upper_bound(k_.data(), k_.data() + n, strike) - k_.data()) - 1, n - 2);
    const double Fk = interp_linear(k_, F_, strike);
    const double partial = 0.5 * (k_[j + 1] - strike) * ((1.0 - Fk) + (1.0 - F_[j + 1]));
    return partial + upper_integral_[j + 1] + top;
}

nlohmann::json TabulatedMarginal::to_json() const {
    return {{"kind", kind()}, {"tabulated", {{"strikes", to_std(k_)}, {"cdf", to_std(F_)}}}};
}

MarginalPtr marginal_from_json(const nlohmann::json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "double_exponential") {
            const auto& p = j.at("params");
            return std::make_shared<DoubleExponentialMarginal>(DoubleExponential{
                p.at("t").get<double>(), p.at("lambda").get<double>(), p.at("lambda_dot").get<double>()});
        }
        if (kind == "normal") {
            const auto& p = j.at("params");
            return std::make_shared<NormalMarginal>(p.at("mean").get<double>(),
                                                    p.at("variance").get<double>());
        }
        if (kind == "mln") {
            const auto& p = j.at("params");
            MlnParams mp{p.at("weights").get<std::vector<double>>(),
                         p.at("forwards").get<std::vector<double>>(),
                         p.at("vols").get<std::vector<double>>()};
            return std::make_shared<MlnMarginal>(std::move(mp), p.at("T").get<double>());
        }
        if (kind == "tabulated") {
            const auto& t = j.at("tabulated");
            return std::make_shared<TabulatedMarginal>(
                to_vector(t.at("strikes").get<std::vector<double>>()),
                to_vector(t.at("cdf").get<std::vector<double>>()));
        }
        throw Error(ErrorKind::parse_error, "unknown marginal kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, e.what());
    }
}

// ---------------------------------------------------------------------------

void MarginalSet::validate() const {
    if (maturities.empty() || marginals.size() != maturities.size()) {
        throw Error(ErrorKind::invalid_argument, "marginal set needs one marginal per maturity");
    }
    for (std::size_t i = 0; i < maturities.size(); ++i) {
        if (!(maturities[i] > 0.0) || (i > 0 && !(maturities[i] > maturities[i - 1]))) {
            throw Error(ErrorKind::invalid_argument, "maturities must be positive and strictly increasing");
        }
        if (!marginals[i]) throw Error(ErrorKind::invalid_argument, "null marginal");
    }
}

nlohmann::json to_json(const MarginalSet& set) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : set.marginals) per.push_back(m->to_json());
    return {{"spot", set.spot}, {"maturities", set.maturities}, {"marginals", per}};
}

MarginalSet marginal_set_from_json(const nlohmann::json& j) {
    MarginalSet set;
    try {
        set.spot = j.at("spot").get<double>();
        set.maturities = j.at("maturities").get<std::vector<double>>();
        for (const auto& m : j.at("marginals")) set.marginals.push_back(marginal_from_json(m));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, e.what());
    }
    set.validate();
    return set;
}

MarginalSet make_double_exponential_set(const std::vector<double>& maturities) {
    MarginalSet set;
    set.spot = 0.0;
    set.maturities = maturities;
    for (double t : maturities) {
        if (!(t > 0.0)) throw Error(ErrorKind::invalid_argument, "maturities must be positive");
        set.marginals.push_back(
            std::make_shared<DoubleExponentialMarginal>(DoubleExponential::inverse_sqrt(t)));
    }
    set.validate();
    return set;
}

ConvexOrderReport check_convex_order(const MarginalSet& set, const Vector& strikes) {
    ConvexOrderReport report;
    for (std::size_t i = 0; i + 1 < set.size(); ++i) {
        for (Index k = 0; k < strikes.size(); ++k) {
            const double deficit =
                set.marginals[i]->call(strikes[k]) - set.marginals[i + 1]->call(strikes[k]);
            if (deficit > kConvexOrderSlack) report.violations.push_back({i, strikes[k], deficit});
        }
    }
    return report;
}

}  // namespace markovflow
