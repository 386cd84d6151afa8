#include "rem/multilevel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rem/rng.hpp"

namespace rem {

namespace {

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw NumericalError(std::string(what) + " not positive definite");
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return ((inv + inv.transpose()) / 2.0).eval();
}

// Eigenvalue floor keeping the heterogeneity covariance invertible on the
// degenerate boundary. Returns true if any eigenvalue was clamped.
bool floor_spd(Eigen::MatrixXd& sigma, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    Eigen::VectorXd ev = es.eigenvalues();
    bool clamped = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < floor) {
            ev[i] = floor;
            clamped = true;
        }
    }
    if (clamped)
        sigma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return clamped;
}

void check_same_shape(const std::vector<ClusterFit>& fits) {
    if (fits.empty()) throw std::invalid_argument("no cluster fits given");
    const int f = fits.front().n_fixed;
    const Eigen::Index t = fits.front().theta_hat.size();
    for (const auto& cf : fits) {
        cf.validate();
        if (cf.n_fixed != f || cf.theta_hat.size() != t)
            throw std::invalid_argument("cluster fits have inconsistent dimensions");
    }
}

}  // namespace

void ClusterFit::validate() const {
    if (n_fixed < 0 || n_fixed > theta_hat.size())
        throw std::invalid_argument("cluster " + cluster_id + ": invalid fixed-effect count");
    if (omega_hat.rows() != theta_hat.size() || omega_hat.cols() != theta_hat.size())
        throw std::invalid_argument("cluster " + cluster_id + ": covariance dimension mismatch");
    if (!omega_hat.isApprox(omega_hat.transpose(), 1e-8))
        throw std::invalid_argument("cluster " + cluster_id + ": covariance not symmetric");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(omega_hat);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw std::invalid_argument("cluster " + cluster_id + ": covariance not positive definite");
}

double random_effects_objective(const std::vector<ClusterFit>& fits, const Eigen::VectorXd& mu,
                                const Eigen::MatrixXd& delta, const Eigen::MatrixXd& sigma) {
    const int k = static_cast<int>(fits.size());
    Eigen::LDLT<Eigen::MatrixXd> sig(sigma);
    if (sig.info() != Eigen::Success || sig.vectorD().minCoeff() <= 0.0)
        throw NumericalError("heterogeneity covariance not positive definite");
    const double logdet = sig.vectorD().array().log().sum();
    double obj = -0.5 * k * logdet;
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd d = delta.row(i).transpose();
        const Eigen::VectorXd r = fits[static_cast<std::size_t>(i)].beta_hat() - mu - d;
        Eigen::LDLT<Eigen::MatrixXd> om(fits[static_cast<std::size_t>(i)].omega_hat);
        obj -= 0.5 * r.dot(om.solve(r));
        obj -= 0.5 * d.dot(sig.solve(d));
    }
    return obj;
}

MultilevelEstimate fit_random_effects_freq(const std::vector<ClusterFit>& fits,
                                           const MultilevelOptions& opts) {
    check_same_shape(fits);
    if (fits.size() < 2)
        throw std::invalid_argument("heterogeneity is unidentifiable with a single cluster");
    if (fits.front().n_fixed != 0)
        throw std::invalid_argument("the moment iteration supports fully random effects only");

    const int k = static_cast<int>(fits.size());
    const int p = fits.front().n_random();

    std::vector<Eigen::MatrixXd> winv(static_cast<std::size_t>(k));
    Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < k; ++i) {
        winv[static_cast<std::size_t>(i)] =
            spd_inverse(fits[static_cast<std::size_t>(i)].omega_hat, "cluster error covariance");
        prec += winv[static_cast<std::size_t>(i)];
    }
    Eigen::LDLT<Eigen::MatrixXd> prec_ldlt(prec);

    // Start at the no-heterogeneity pool, deviations from it, and their spread.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < k; ++i)
        rhs += winv[static_cast<std::size_t>(i)] * fits[static_cast<std::size_t>(i)].beta_hat();
    Eigen::VectorXd mu = prec_ldlt.solve(rhs);
    Eigen::MatrixXd delta(k, p);
    for (int i = 0; i < k; ++i)
        delta.row(i) = (fits[static_cast<std::size_t>(i)].beta_hat() - mu).transpose();
    Eigen::MatrixXd sigma = (delta.transpose() * delta) / k;

    MultilevelEstimate est;
    est.boundary_hits = 0;
    est.monotone = true;
    bool floored = floor_spd(sigma, opts.sigma_floor);
    if (floored) est.boundary_hits++;

    double prev_obj = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int sweep = 0;
    while (sweep < opts.max_sweeps) {
        ++sweep;
        const Eigen::VectorXd mu_old = mu;
        const Eigen::MatrixXd delta_old = delta;
        const Eigen::MatrixXd sigma_old = sigma;

        Eigen::MatrixXd sigma_inv = spd_inverse(sigma, "heterogeneity covariance");

        for (int i = 0; i < k; ++i) {
            const Eigen::MatrixXd a = winv[static_cast<std::size_t>(i)] + sigma_inv;
            const Eigen::VectorXd b = winv[static_cast<std::size_t>(i)] *
                                      (fits[static_cast<std::size_t>(i)].beta_hat() - mu);
            delta.row(i) = Eigen::LDLT<Eigen::MatrixXd>(a).solve(b).transpose();
        }

        if (opts.marginal_weights) {
            Eigen::MatrixXd wprec = Eigen::MatrixXd::Zero(p, p);
            Eigen::VectorXd wrhs = Eigen::VectorXd::Zero(p);
            for (int i = 0; i < k; ++i) {
                Eigen::MatrixXd wi =
                    spd_inverse(fits[static_cast<std::size_t>(i)].omega_hat + sigma,
                                "marginal covariance");
                wprec += wi;
                wrhs += wi * fits[static_cast<std::size_t>(i)].beta_hat();
            }
            mu = Eigen::LDLT<Eigen::MatrixXd>(wprec).solve(wrhs);
        } else {
            Eigen::VectorXd r = Eigen::VectorXd::Zero(p);
            for (int i = 0; i < k; ++i)
                r += winv[static_cast<std::size_t>(i)] *
                     (fits[static_cast<std::size_t>(i)].beta_hat() - delta.row(i).transpose());
            mu = prec_ldlt.solve(r);
        }

        sigma = (delta.transpose() * delta) / k;
        floored = floor_spd(sigma, opts.sigma_floor);
        if (floored) est.boundary_hits++;

        // The cycle is coordinate ascent on the joint log-likelihood; only the
        // floor (and the marginal-weight variant) may break monotonicity.
        if (!opts.marginal_weights) {
            const double obj = random_effects_objective(fits, mu, delta, sigma);
            if (std::isfinite(prev_obj) && !floored &&
                obj < prev_obj - 1e-10 * (1.0 + std::abs(prev_obj)))
                est.monotone = false;
            prev_obj = obj;
        }

        const double change = std::max({(mu - mu_old).lpNorm<Eigen::Infinity>(),
                                        (delta - delta_old).lpNorm<Eigen::Infinity>(),
                                        (sigma - sigma_old).lpNorm<Eigen::Infinity>()});
        if (change < opts.tol) {
            converged = true;
            break;
        }
    }

    est.mu = mu;
    est.psi = Eigen::VectorXd(0);
    est.delta = delta;
    est.sigma = sigma;
    est.converged = converged;
    est.sweeps = sweep;
    // Sandwich variance of mu: bread from the marginal weights W_k at the
    // converged sigma, meat from the empirical residual spread, so the SEs
    // track the actual dispersion of beta_k even when the point-deviation
    // sigma estimator sits on its boundary.
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < k; ++i) {
        const Eigen::MatrixXd wi = spd_inverse(
            fits[static_cast<std::size_t>(i)].omega_hat + sigma, "marginal covariance");
        const Eigen::VectorXd resid = fits[static_cast<std::size_t>(i)].beta_hat() - mu;
        bread += wi;
        meat += wi * resid * resid.transpose() * wi;
    }
    const Eigen::MatrixXd bread_inv = spd_inverse(bread, "pooled marginal precision");
    const double dof_factor = static_cast<double>(k) / (k - 1.0);
    est.se_mu =
        (dof_factor * (bread_inv * meat * bread_inv)).diagonal().cwiseSqrt();
    est.se_psi = Eigen::VectorXd(0);
    for (const auto& cf : fits) est.cluster_ids.push_back(cf.cluster_id);
    return est;
}

void GibbsConfig::validate() const {
    if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
    if (iterations <= burn_in || burn_in < 0)
        throw std::invalid_argument("need iterations > burn_in >= 0");
    if (thin < 1) throw std::invalid_argument("thin must be >= 1");
    if (chains < 1) throw std::invalid_argument("need at least one chain");
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (!(d[i] > 0.0)) throw std::invalid_argument("Half-t scales d must be positive");
}

Eigen::VectorXd GibbsConfig::scales(int p) const {
    if (d.size() == 0) return Eigen::VectorXd::Constant(p, 1e5);
    if (d.size() == 1) return Eigen::VectorXd::Constant(p, d[0]);
    if (d.size() != p) throw std::invalid_argument("Half-t scale vector has wrong length");
    return d;
}

ClusterDerived derive_cluster(const ClusterFit& fit) {
    fit.validate();
    const int f = fit.n_fixed;
    const int p = fit.n_random();
    ClusterDerived der;
    der.omega_inv = spd_inverse(fit.omega_hat, ("cluster " + fit.cluster_id + " covariance").c_str());
    if (f == 0) {
        der.s = fit.omega_hat;
        der.gain = Eigen::MatrixXd(p, 0);
    } else {
        const Eigen::MatrixXd o11 = fit.omega_hat.topLeftCorner(f, f);
        const Eigen::MatrixXd o21 = fit.omega_hat.bottomLeftCorner(p, f);
        const Eigen::MatrixXd o22 = fit.omega_hat.bottomRightCorner(p, p);
        Eigen::LDLT<Eigen::MatrixXd> o11_ldlt(o11);
        if (o11_ldlt.info() != Eigen::Success || o11_ldlt.vectorD().minCoeff() <= 0.0)
            throw NumericalError("cluster " + fit.cluster_id + ": fixed-effect block not positive definite");
        der.gain = o11_ldlt.solve(o21.transpose()).transpose();  // o21 * o11^-1
        der.s = o22 - der.gain * o21.transpose();
        der.s = ((der.s + der.s.transpose()) / 2.0).eval();
    }
    Eigen::LDLT<Eigen::MatrixXd> s_ldlt(der.s);
    if (s_ldlt.info() != Eigen::Success || s_ldlt.vectorD().minCoeff() <= 0.0)
        throw NumericalError("cluster " + fit.cluster_id +
                             ": conditional covariance not positive definite");
    der.s_inv = s_ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    der.s_inv = ((der.s_inv + der.s_inv.transpose()) / 2.0).eval();
    return der;
}

void delta_conditional(const ClusterFit& fit, const ClusterDerived& der, const Eigen::VectorXd& psi,
                       const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma_inv,
                       Eigen::VectorXd* mean_out, Eigen::MatrixXd* prec_out) {
    Eigen::VectorXd shift = fit.beta_hat() - mu;
    if (fit.n_fixed > 0) shift += der.gain * (psi - fit.psi_hat());
    const Eigen::MatrixXd prec = der.s_inv + sigma_inv;
    const Eigen::VectorXd mean = Eigen::LDLT<Eigen::MatrixXd>(prec).solve(der.s_inv * shift);
    if (mean_out) *mean_out = mean;
    if (prec_out) *prec_out = prec;
}

namespace {

// Wishart(nu, S) via the Bartlett construction; returns C with C*C' ~ W.
Eigen::MatrixXd wishart_factor(double nu, const Eigen::MatrixXd& scale_factor, Rng& rng) {
    const int p = static_cast<int>(scale_factor.rows());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        t(i, i) = std::sqrt(rng.chi_squared(nu - i));
        for (int j = 0; j < i; ++j) t(i, j) = rng.normal();
    }
    return scale_factor * t;
}

// Inverse-Wishart(nu, psi_scale): returns (sigma, sigma_inv).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> inverse_wishart(double nu,
                                                            const Eigen::MatrixXd& psi_scale,
                                                            Rng& rng) {
    const int p = static_cast<int>(psi_scale.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(psi_scale);
    if (llt.info() != Eigen::Success)
        throw NumericalError("inverse-Wishart scale matrix not positive definite");
    // Any F with F F' = psi_scale^-1 works for Bartlett; use inv(L)'.
    Eigen::MatrixXd f = llt.matrixL().solve(Eigen::MatrixXd::Identity(p, p)).transpose();
    Eigen::MatrixXd c = wishart_factor(nu, f, rng);
    Eigen::MatrixXd cinv = c.partialPivLu().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd sigma = cinv.transpose() * cinv;       // (C C')^-1
    Eigen::MatrixXd sigma_inv = c * c.transpose();
    sigma = ((sigma + sigma.transpose()) / 2.0).eval();
    sigma_inv = ((sigma_inv + sigma_inv.transpose()) / 2.0).eval();
    return {std::move(sigma), std::move(sigma_inv)};
}

struct Welford {
    long n = 0;
    double mean = 0, m2 = 0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double var() const { return n > 1 ? m2 / (n - 1) : 0.0; }
};

double rhat_from_halves(const std::vector<Welford>& halves) {
    const int m = static_cast<int>(halves.size());
    if (m < 2) return 1.0;
    long n = halves.front().n;
    for (const auto& h : halves) n = std::min(n, h.n);
    if (n < 2) return 1.0;
    double grand = 0, w = 0;
    for (const auto& h : halves) {
        grand += h.mean;
        w += h.var();
    }
    grand /= m;
    w /= m;
    double b = 0;
    for (const auto& h : halves) b += (h.mean - grand) * (h.mean - grand);
    b *= static_cast<double>(n) / (m - 1);
    if (w <= 0.0) return 1.0;
    const double var_plus = (static_cast<double>(n - 1) / n) * w + b / n;
    return std::sqrt(var_plus / w);
}

std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd>& chains) {
    std::vector<Eigen::VectorXd> halves;
    for (const auto& c : chains) {
        const Eigen::Index n2 = c.size() / 2;
        if (n2 < 1) continue;
        halves.push_back(c.head(n2));
        halves.push_back(c.tail(n2));
    }
    return halves;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
    std::vector<Welford> acc;
    for (const auto& h : split_halves(chains)) {
        Welford w;
        for (Eigen::Index i = 0; i < h.size(); ++i) w.add(h[i]);
        acc.push_back(w);
    }
    return rhat_from_halves(acc);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
    const std::vector<Eigen::VectorXd> seqs = split_halves(chains);
    const int m = static_cast<int>(seqs.size());
    if (m == 0) return 0.0;
    const Eigen::Index n = seqs.front().size();
    if (n < 4) return static_cast<double>(m * n);

    std::vector<double> means(static_cast<std::size_t>(m));
    double w = 0, grand = 0;
    for (int c = 0; c < m; ++c) {
        means[static_cast<std::size_t>(c)] = seqs[static_cast<std::size_t>(c)].mean();
        grand += means[static_cast<std::size_t>(c)];
        const Eigen::ArrayXd d =
            seqs[static_cast<std::size_t>(c)].array() - means[static_cast<std::size_t>(c)];
        w += d.square().sum() / (n - 1);
    }
    w /= m;
    grand /= m;
    double b = 0;
    for (double mm : means) b += (mm - grand) * (mm - grand);
    b *= static_cast<double>(n) / std::max(1, m - 1);
    const double var_plus = (static_cast<double>(n - 1) / n) * w + (m > 1 ? b / n : 0.0);
    if (var_plus <= 0.0) return static_cast<double>(m * n);

    // Mean within-chain autocovariance at each lag, combined via var_plus
    // (initial monotone positive-pair truncation).
    auto acov = [&](Eigen::Index lag) {
        double s = 0;
        for (int c = 0; c < m; ++c) {
            const Eigen::VectorXd& x = seqs[static_cast<std::size_t>(c)];
            const double mu = means[static_cast<std::size_t>(c)];
            double a = 0;
            for (Eigen::Index i = 0; i + lag < n; ++i) a += (x[i] - mu) * (x[i + lag] - mu);
            s += a / n;
        }
        return s / m;
    };

    double tau = 1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index lag = 1; lag + 1 < n; lag += 2) {
        const double rho1 = 1.0 - (w - acov(lag)) / var_plus;
        const double rho2 = 1.0 - (w - acov(lag + 1)) / var_plus;
        double pair = rho1 + rho2;
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);  // enforce monotone decrease
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    const double ess = static_cast<double>(m) * n / tau;
    return std::min(ess, static_cast<double>(m) * n);
}

namespace {

struct DrawAccumulators {
    // split-half accumulators per tracked scalar: [param][2*chain + half]
    std::vector<std::vector<Welford>> halves;
    int n_params = 0;
    void init(int params, int chains) {
        n_params = params;
        halves.assign(static_cast<std::size_t>(params),
                      std::vector<Welford>(static_cast<std::size_t>(2 * chains)));
    }
    void add(int param, int chain, bool second_half, double x) {
        halves[static_cast<std::size_t>(param)][static_cast<std::size_t>(2 * chain + (second_half ? 1 : 0))]
            .add(x);
    }
    double rhat(int param) const { return rhat_from_halves(halves[static_cast<std::size_t>(param)]); }
};

}  // namespace

GibbsResult gibbs_mixed(const std::vector<ClusterFit>& fits, const GibbsConfig& cfg,
                        std::vector<std::string> fixed_names,
                        std::vector<std::string> random_names) {
    check_same_shape(fits);
    cfg.validate();
    const int k = static_cast<int>(fits.size());
    const int f = fits.front().n_fixed;
    const int p = fits.front().n_random();
    const Eigen::VectorXd dscale = cfg.scales(p);

    if (fixed_names.empty())
        for (int i = 0; i < f; ++i) fixed_names.push_back("psi[" + std::to_string(i) + "]");
    if (random_names.empty())
        for (int i = 0; i < p; ++i) random_names.push_back("mu[" + std::to_string(i) + "]");

    std::vector<ClusterDerived> der;
    der.reserve(static_cast<std::size_t>(k));
    Eigen::MatrixXd joint_prec = Eigen::MatrixXd::Zero(f + p, f + p);
    for (const auto& cf : fits) {
        der.push_back(derive_cluster(cf));
        joint_prec += der.back().omega_inv;
    }
    Eigen::LLT<Eigen::MatrixXd> joint_llt(joint_prec);
    if (joint_llt.info() != Eigen::Success)
        throw NumericalError("pooled precision for (psi, mu) not positive definite");

    // No-pooling start: inverse-variance combined theta, residual deviations.
    Eigen::VectorXd theta_rhs = Eigen::VectorXd::Zero(f + p);
    for (int i = 0; i < k; ++i)
        theta_rhs += der[static_cast<std::size_t>(i)].omega_inv * fits[static_cast<std::size_t>(i)].theta_hat;
    const Eigen::VectorXd theta0 = joint_llt.solve(theta_rhs);

    const int retained = (cfg.iterations - cfg.burn_in) / cfg.thin;
    if (retained < 2) throw std::invalid_argument("too few retained iterations");

    GibbsResult res;
    res.n_fixed = f;
    res.n_random = p;
    res.n_clusters = k;
    res.fixed_names = fixed_names;
    res.random_names = random_names;
    for (const auto& cf : fits) res.cluster_ids.push_back(cf.cluster_id);
    const int n_vech = p * (p + 1) / 2;
    res.theta_draws.assign(static_cast<std::size_t>(cfg.chains), Eigen::MatrixXd(retained, f + p));
    res.sigma_draws.assign(static_cast<std::size_t>(cfg.chains), Eigen::MatrixXd(retained, n_vech));
    res.alpha_draws.assign(static_cast<std::size_t>(cfg.chains), Eigen::MatrixXd(retained, p));
    res.delta_mean = Eigen::MatrixXd::Zero(k, p);
    res.all_sigma_pd = true;

    DrawAccumulators delta_acc;
    delta_acc.init(k * p, cfg.chains);

    Rng master(cfg.seed);
    const Eigen::VectorXd theta_se =
        joint_llt.solve(Eigen::MatrixXd::Identity(f + p, f + p)).diagonal().cwiseSqrt();

    for (int chain = 0; chain < cfg.chains; ++chain) {
        Rng rng = master.child(static_cast<std::uint64_t>(chain) + 1);

        // Initialize at the pooled start, jittered so the chains are
        // over-dispersed and the scale-reduction diagnostic has teeth.
        Eigen::VectorXd psi = theta0.head(f);
        Eigen::VectorXd mu = theta0.tail(p);
        for (int i = 0; i < f; ++i) psi[i] += 0.5 * theta_se[i] * rng.normal();
        for (int i = 0; i < p; ++i) mu[i] += 0.5 * theta_se[f + i] * rng.normal();
        Eigen::MatrixXd delta(k, p);
        for (int i = 0; i < k; ++i) {
            const Eigen::VectorXd se =
                fits[static_cast<std::size_t>(i)].omega_hat.bottomRightCorner(p, p).diagonal().cwiseSqrt();
            for (int j = 0; j < p; ++j)
                delta(i, j) = fits[static_cast<std::size_t>(i)].beta_hat()[j] - mu[j] +
                              0.25 * se[j] * rng.normal();
        }
        Eigen::MatrixXd sigma = (delta.transpose() * delta) / k;
        floor_spd(sigma, 1e-8);
        Eigen::MatrixXd sigma_inv = spd_inverse(sigma, "initial heterogeneity covariance");
        Eigen::VectorXd alpha = Eigen::VectorXd::Ones(p);

        int kept = 0;
        for (int it = 0; it < cfg.iterations; ++it) {
            // (psi, mu) | delta — Gaussian around the inverse-variance pool of
            // the deviation-corrected cluster estimates.
            Eigen::VectorXd r = Eigen::VectorXd::Zero(f + p);
            for (int i = 0; i < k; ++i) {
                Eigen::VectorXd adj = fits[static_cast<std::size_t>(i)].theta_hat;
                adj.tail(p) -= delta.row(i).transpose();
                r += der[static_cast<std::size_t>(i)].omega_inv * adj;
            }
            Eigen::VectorXd mean = joint_llt.solve(r);
            Eigen::VectorXd z(f + p);
            for (int i = 0; i < f + p; ++i) z[i] = rng.normal();
            Eigen::VectorXd theta = mean + joint_llt.matrixU().solve(z);
            psi = theta.head(f);
            mu = theta.tail(p);

            // delta_k | rest
            for (int i = 0; i < k; ++i) {
                Eigen::VectorXd dmean;
                Eigen::MatrixXd dprec;
                delta_conditional(fits[static_cast<std::size_t>(i)], der[static_cast<std::size_t>(i)],
                                  psi, mu, sigma_inv, &dmean, &dprec);
                Eigen::LLT<Eigen::MatrixXd> dllt(dprec);
                if (dllt.info() != Eigen::Success)
                    throw NumericalError("deviation precision not positive definite at iteration " +
                                         std::to_string(it));
                Eigen::VectorXd zi(p);
                for (int j = 0; j < p; ++j) zi[j] = rng.normal();
                delta.row(i) = (dmean + dllt.matrixU().solve(zi)).transpose();
            }

            // Sigma | delta, alpha — conjugate inverse-Wishart with the
            // Half-t augmentation entering through the diagonal scale.
            Eigen::MatrixXd scale = (delta.transpose() * delta).eval();
            for (int i = 0; i < p; ++i) scale(i, i) += 2.0 * cfg.eta / alpha[i];
            const double nu = cfg.eta + k + p - 1;
            auto [sig, sig_inv] = inverse_wishart(nu, scale, rng);
            sigma = std::move(sig);
            sigma_inv = std::move(sig_inv);

            // alpha_i | Sigma
            for (int i = 0; i < p; ++i)
                alpha[i] = rng.inverse_gamma(0.5 * (cfg.eta + p),
                                             cfg.eta * sigma_inv(i, i) + 1.0 / (dscale[i] * dscale[i]));

            if (!theta.allFinite() || !delta.allFinite() || !sigma.allFinite() || !alpha.allFinite())
                throw NumericalError("non-finite draw at iteration " + std::to_string(it));

            if (it < cfg.burn_in || (it - cfg.burn_in) % cfg.thin != 0) continue;

            res.theta_draws[static_cast<std::size_t>(chain)].row(kept) = theta.transpose();
            int col = 0;
            for (int j = 0; j < p; ++j)
                for (int i = j; i < p; ++i)
                    res.sigma_draws[static_cast<std::size_t>(chain)](kept, col++) = sigma(i, j);
            res.alpha_draws[static_cast<std::size_t>(chain)].row(kept) = alpha.transpose();
            {
                Eigen::LLT<Eigen::MatrixXd> pd(sigma);
                if (pd.info() != Eigen::Success) res.all_sigma_pd = false;
            }
            const bool second_half = kept >= retained / 2;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < p; ++j) {
                    res.delta_mean(i, j) += delta(i, j);
                    delta_acc.add(i * p + j, chain, second_half, delta(i, j));
                }
            ++kept;
        }
    }
    res.delta_mean /= static_cast<double>(cfg.chains) * retained;

    // Summaries + diagnostics over the stored parameters.
    auto summarize = [&](const std::string& name, auto getter) {
        std::vector<Eigen::VectorXd> per_chain;
        std::vector<double> all;
        for (int c = 0; c < cfg.chains; ++c) {
            Eigen::VectorXd v(retained);
            for (int i = 0; i < retained; ++i) v[i] = getter(c, i);
            per_chain.push_back(v);
            for (int i = 0; i < retained; ++i) all.push_back(v[i]);
        }
        ParamSummary s;
        s.name = name;
        const double n = static_cast<double>(all.size());
        double mean = 0;
        for (double x : all) mean += x;
        mean /= n;
        double var = 0;
        for (double x : all) var += (x - mean) * (x - mean);
        var /= std::max(1.0, n - 1);
        s.mean = mean;
        s.sd = std::sqrt(var);
        std::sort(all.begin(), all.end());
        auto quant = [&](double q) {
            const double pos = q * (n - 1);
            const std::size_t lo = static_cast<std::size_t>(pos);
            const double fr = pos - static_cast<double>(lo);
            return lo + 1 < all.size() ? all[lo] * (1 - fr) + all[lo + 1] * fr : all[lo];
        };
        s.q025 = quant(0.025);
        s.q975 = quant(0.975);
        s.rhat = split_rhat(per_chain);
        s.ess = effective_sample_size(per_chain);
        s.mcse = s.ess > 0 ? s.sd / std::sqrt(s.ess) : std::numeric_limits<double>::quiet_NaN();
        res.summaries.push_back(s);
        res.max_rhat = std::max(res.max_rhat, s.rhat);
    };

    for (int j = 0; j < f; ++j)
        summarize(fixed_names[static_cast<std::size_t>(j)],
                  [&](int c, int i) { return res.theta_draws[static_cast<std::size_t>(c)](i, j); });
    for (int j = 0; j < p; ++j)
        summarize(random_names[static_cast<std::size_t>(j)],
                  [&](int c, int i) { return res.theta_draws[static_cast<std::size_t>(c)](i, f + j); });
    {
        int col = 0;
        for (int j = 0; j < p; ++j)
            for (int i = j; i < p; ++i) {
                const int cc = col++;
                summarize("sigma[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                          [&, cc](int c, int it) {
                              return res.sigma_draws[static_cast<std::size_t>(c)](it, cc);
                          });
            }
    }
    for (int j = 0; j < p; ++j)
        summarize("alpha[" + std::to_string(j) + "]",
                  [&](int c, int i) { return res.alpha_draws[static_cast<std::size_t>(c)](i, j); });

    for (int i = 0; i < k; ++i)
        for (int j = 0; j < p; ++j) {
            const double rh = delta_acc.rhat(i * p + j);
            res.delta_rhat["delta[" + res.cluster_ids[static_cast<std::size_t>(i)] + "][" +
                           std::to_string(j) + "]"] = rh;
            res.max_rhat = std::max(res.max_rhat, rh);
        }
    return res;
}

Eigen::VectorXd GibbsResult::posterior_mean_theta() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n_fixed + n_random);
    long n = 0;
    for (const auto& d : theta_draws) {
        m += d.colwise().sum().transpose();
        n += d.rows();
    }
    return m / static_cast<double>(n);
}

Eigen::MatrixXd GibbsResult::posterior_mean_sigma() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_random * (n_random + 1) / 2);
    long n = 0;
    for (const auto& d : sigma_draws) {
        v += d.colwise().sum().transpose();
        n += d.rows();
    }
    v /= static_cast<double>(n);
    Eigen::MatrixXd s(n_random, n_random);
    int col = 0;
    for (int j = 0; j < n_random; ++j)
        for (int i = j; i < n_random; ++i) {
            s(i, j) = v[col];
            s(j, i) = v[col];
            ++col;
        }
    return s;
}

const ParamSummary& GibbsResult::summary(const std::string& name) const {
    for (const auto& s : summaries)
        if (s.name == name) return s;
    throw std::invalid_argument("no summary for parameter " + name);
}

void GibbsResult::write_draws_csv(std::ostream& out) const {
    out << "chain,iteration";
    for (const auto& n : fixed_names) out << ',' << n;
    for (const auto& n : random_names) out << ',' << n;
    for (int j = 0; j < n_random; ++j)
        for (int i = j; i < n_random; ++i) out << ",sigma[" << i << "][" << j << "]";
    for (int j = 0; j < n_random; ++j) out << ",alpha[" << j << "]";
    out << "\n";
    out.precision(17);
    for (std::size_t c = 0; c < theta_draws.size(); ++c) {
        for (Eigen::Index i = 0; i < theta_draws[c].rows(); ++i) {
            out << c << ',' << i;
            for (Eigen::Index j = 0; j < theta_draws[c].cols(); ++j) out << ',' << theta_draws[c](i, j);
            for (Eigen::Index j = 0; j < sigma_draws[c].cols(); ++j) out << ',' << sigma_draws[c](i, j);
            for (Eigen::Index j = 0; j < alpha_draws[c].cols(); ++j) out << ',' << alpha_draws[c](i, j);
            out << "\n";
        }
    }
}

Eigen::MatrixXd sample_sigma_prior_correlations(int p, const GibbsConfig& cfg, int n_draws) {
    cfg.validate();
    if (p < 2) throw std::invalid_argument("correlations need at least 2 dimensions");
    const Eigen::VectorXd dscale = cfg.scales(p);
    Rng rng(cfg.seed);
    const int n_corr = p * (p - 1) / 2;
    Eigen::MatrixXd out(n_draws, n_corr);
    for (int n = 0; n < n_draws; ++n) {
        Eigen::MatrixXd scale = Eigen::MatrixXd::Zero(p, p);
        for (int i = 0; i < p; ++i) {
            const double alpha = rng.inverse_gamma(0.5, 1.0 / (dscale[i] * dscale[i]));
            scale(i, i) = 2.0 * cfg.eta / alpha;
        }
        auto [sigma, sigma_inv] = inverse_wishart(cfg.eta + p - 1, scale, rng);
        (void)sigma_inv;
        int col = 0;
        for (int j = 0; j < p; ++j)
            for (int i = j + 1; i < p; ++i)
                out(n, col++) = sigma(i, j) / std::sqrt(sigma(i, i) * sigma(j, j));
    }
    return out;
}

std::vector<ShrinkageRow> shrinkage_report(const std::vector<ClusterFit>& fits,
                                           const Eigen::VectorXd& mu, const Eigen::MatrixXd& delta,
                                           const std::vector<std::string>& effect_names) {
    check_same_shape(fits);
    const int k = static_cast<int>(fits.size());
    const int p = fits.front().n_random();
    if (delta.rows() != k || delta.cols() != p || mu.size() != p)
        throw std::invalid_argument("estimate dimensions do not match the cluster fits");
    std::vector<ShrinkageRow> rows;
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd bhat = fits[static_cast<std::size_t>(i)].beta_hat();
        for (int j = 0; j < p; ++j) {
            ShrinkageRow r;
            r.cluster_id = fits[static_cast<std::size_t>(i)].cluster_id;
            r.effect = j < static_cast<int>(effect_names.size()) ? effect_names[static_cast<std::size_t>(j)]
                                                                 : "effect" + std::to_string(j);
            r.n_events = fits[static_cast<std::size_t>(i)].n_events;
            r.mle = bhat[j];
            r.multilevel = mu[j] + delta(i, j);
            r.shrinkage = r.mle - r.multilevel;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

MseReport mse_study(const Eigen::MatrixXd& truths, const std::vector<ClusterFit>& fits,
                    const Eigen::VectorXd& mu, const Eigen::MatrixXd& delta,
                    const std::vector<std::string>& effect_names) {
    check_same_shape(fits);
    const int k = static_cast<int>(fits.size());
    const int p = fits.front().n_random();
    if (truths.rows() != k || truths.cols() != p)
        throw std::invalid_argument("truth matrix dimensions do not match the cluster fits");
    MseReport rep;
    rep.mse_multilevel = Eigen::VectorXd::Zero(p);
    rep.mse_mle = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j)
        rep.effects.push_back(j < static_cast<int>(effect_names.size())
                                  ? effect_names[static_cast<std::size_t>(j)]
                                  : "effect" + std::to_string(j));
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd bhat = fits[static_cast<std::size_t>(i)].beta_hat();
        for (int j = 0; j < p; ++j) {
            const double ml = mu[j] + delta(i, j) - truths(i, j);
            const double ind = bhat[j] - truths(i, j);
            rep.mse_multilevel[j] += ml * ml;
            rep.mse_mle[j] += ind * ind;
        }
    }
    rep.mse_multilevel /= k;
    rep.mse_mle /= k;
    return rep;
}

ClusterFitReport fit_clusters(const std::vector<EventSequence>& seqs,
                              const std::vector<std::string>& cluster_ids,
                              const std::vector<StatisticSpec>& specs, const ActorAttributes& attrs,
                              ModelKind kind, const std::vector<int>& fixed_idx,
                              const FitOptions& fit_opts) {
    if (seqs.size() < 2) throw std::invalid_argument("need at least 2 clusters");
    if (!cluster_ids.empty() && cluster_ids.size() != seqs.size())
        throw std::invalid_argument("cluster id list does not match the sequences");
    const int total = static_cast<int>(specs.size());
    std::vector<bool> is_fixed(static_cast<std::size_t>(total), false);
    for (int idx : fixed_idx) {
        if (idx < 0 || idx >= total) throw std::invalid_argument("fixed-effect index out of range");
        if (is_fixed[static_cast<std::size_t>(idx)])
            throw std::invalid_argument("duplicate fixed-effect index");
        is_fixed[static_cast<std::size_t>(idx)] = true;
    }
    std::vector<int> order;  // fixed block then random block, spec order within each
    ClusterFitReport rep;
    for (int i = 0; i < total; ++i)
        if (is_fixed[static_cast<std::size_t>(i)]) {
            order.push_back(i);
            rep.fixed_names.push_back(specs[static_cast<std::size_t>(i)].name(specs));
        }
    rep.n_fixed = static_cast<int>(order.size());
    for (int i = 0; i < total; ++i)
        if (!is_fixed[static_cast<std::size_t>(i)]) {
            order.push_back(i);
            rep.random_names.push_back(specs[static_cast<std::size_t>(i)].name(specs));
        }

    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const std::string id = cluster_ids.empty() ? std::to_string(s) : cluster_ids[s];
        if (seqs[s].n_events() < total) {
            rep.excluded.push_back(id + ": fewer events (" + std::to_string(seqs[s].n_events()) +
                                   ") than parameters (" + std::to_string(total) + ")");
            continue;
        }
        FitResult fr;
        try {
            fr = fit_rem(seqs[s], specs, attrs, kind, fit_opts);
        } catch (const std::exception& e) {
            rep.excluded.push_back(id + ": " + e.what());
            continue;
        }
        if (!fr.converged) {
            rep.excluded.push_back(id + ": fit did not converge");
            continue;
        }
        if (!fr.dropped.empty()) {
            rep.excluded.push_back(id + ": constant columns dropped in this cluster");
            continue;
        }
        ClusterFit cf;
        cf.cluster_id = id;
        cf.n_fixed = rep.n_fixed;
        cf.n_events = fr.n_events;
        cf.theta_hat.resize(total);
        cf.omega_hat.resize(total, total);
        for (int i = 0; i < total; ++i) {
            cf.theta_hat[i] = fr.beta[order[static_cast<std::size_t>(i)]];
            for (int j = 0; j < total; ++j)
                cf.omega_hat(i, j) = fr.covariance(order[static_cast<std::size_t>(i)],
                                                   order[static_cast<std::size_t>(j)]);
        }
        try {
            cf.validate();
        } catch (const std::exception& e) {
            rep.excluded.push_back(id + ": " + e.what());
            continue;
        }
        rep.fits.push_back(std::move(cf));
    }
    if (rep.fits.empty()) throw NumericalError("all cluster fits failed");
    return rep;
}

}  // namespace rem
