"""Brute-force reference computations, independent of the package samplers."""
import numpy as np
from scipy import integrate, special, stats


def _trapz(f, x, axis=-1):
    return integrate.trapezoid(f, x, axis=axis)


def normal_hierarchy_grid(y, m=0.0, v_bar=100.0, a=2.0, b=2.0, a_t=2.0, b_t=2.0,
                          mu_lim=(-60, 60), n_mu=4001, g_lim=None, n_g=2001):
    """Posterior mean and SD of the top-level mean for one group.

    Model: y_i ~ N(mu_1, v), mu_1 ~ N(mu, vt), mu ~ N(m, v_bar), with Gamma
    (shape, rate) priors on 1/v and 1/vt.  Both precisions are integrated out
    analytically, leaving a 2-d grid over (mu, mu_1).
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if g_lim is None:
        g_lim = (y.min() - 25.0, y.max() + 25.0)
    mu = np.linspace(*mu_lim, n_mu)
    g = np.linspace(*g_lim, n_g)
    S = ((y[None, :] - g[:, None]) ** 2).sum(axis=1)
    log_like = -(a + n / 2) * np.log(b + S / 2)                       # (n_g,)
    diff = g[None, :] - mu[:, None]
    log_link = -(a_t + 0.5) * np.log(b_t + diff ** 2 / 2)            # (n_mu, n_g)
    log_prior = -((mu - m) ** 2) / (2 * v_bar)
    lp = log_link + log_like[None, :] + log_prior[:, None]
    w = np.exp(lp - lp.max())
    marg = _trapz(w, g, axis=1)
    z = _trapz(marg, mu)
    mean = _trapz(mu * marg, mu) / z
    var = _trapz((mu - mean) ** 2 * marg, mu) / z
    return mean, np.sqrt(var)


def beta_hierarchy_grid(x, n_W, n_B, alpha=1.0, beta=1.0, n=1201, lim=12.0):
    """Posterior mean of p for one group with fixed concentrations.

    Model: x_i ~ Beta(n_W p_g, n_W (1 - p_g)), p_g ~ Beta(n_B p, n_B (1 - p)),
    p ~ Beta(alpha, beta).  Integrated on a logit grid for both p and p_g.
    """
    x = np.asarray(x, dtype=float)
    t = np.linspace(-lim, lim, n)
    p = special.expit(t)
    jac = p * (1 - p)
    P, G = p[:, None], p[None, :]
    lg = stats.beta.logpdf(x[None, :], n_W * p[:, None], n_W * (1 - p[:, None])).sum(axis=1)
    link = (special.xlogy(n_B * P - 1, G) + special.xlog1py(n_B * (1 - P) - 1, -G)
            - special.betaln(n_B * P, n_B * (1 - P)))
    lp = (link + lg[None, :] + np.log(jac)[None, :]
          + stats.beta.logpdf(P, alpha, beta) + np.log(jac)[:, None])
    w = np.exp(lp - lp.max())
    marg = _trapz(w, t, axis=1)
    return _trapz(p * marg, t) / _trapz(marg, t)


def paired_mean_positive(d, prior_var=1e6, a0=1e-3, b0=1e-3, n=4001):
    """Pr(eta > 0) for d_i ~ N(eta, s2), eta ~ N(0, prior_var), 1/s2 ~ Gamma(a0, b0).

    With this prior the 1/s2 integral is closed form; eta is integrated on a grid.
    """
    d = np.asarray(d, dtype=float)
    k = d.size
    sd = max(d.std(ddof=1), 1e-12) / np.sqrt(k)
    eta = np.linspace(d.mean() - 60 * sd, d.mean() + 60 * sd, n)
    S = ((d[None, :] - eta[:, None]) ** 2).sum(axis=1)
    lp = -(a0 + k / 2) * np.log(b0 + S / 2) - eta ** 2 / (2 * prior_var)
    w = np.exp(lp - lp.max())
    return _trapz(np.where(eta > 0, w, 0.0), eta) / _trapz(w, eta)
