"""EM fitting of the shared spike-and-slab prior across tissues.

All tissues share one design X.  The E-step computes per-tissue
responsibilities for the signal component; the M-step updates
(tau1, beta, eta, sigma2).  With complete data all four updates are closed
form.  With missing rows tau1 and beta stay closed form (beta as a
responsibility-weighted GLS at the current variance parameters) while
(sigma2, eta) are updated by bracketed golden-section coordinate ascent on
the EM objective, which makes the step a generalized M-step: the objective
never decreases, so the observed-data log-likelihood is still monotone.

Everything the inner loop needs is reduced once per fit to per-tissue
statistics in the eigenbasis of the whitened sub-Gram matrices
L^-1 X_t'X_t L^-T (L the Cholesky factor of X'X), after which one
objective evaluation costs O(m p) regardless of n.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit

from . import kernels
from .errors import BadShape, DegenerateResponsibilities, NonFinite
from .linalg import _checked_cholesky
from .posterior import ETA_FLOOR, TAU_CLAMP, PriorParams, clamp_tau, tissue_posterior

# responsibility mass below which the signal component is considered empty
DEGENERATE_MASS = 1e-12


@dataclass(frozen=True)
class FitOptions:
    """Knobs for :func:`fit`.

    tol is the relative log-likelihood change declaring convergence;
    eta_floor and tau_clamp keep the prior parameters off the boundary.
    """

    tol: float = 1e-8
    max_iter: int = 1000
    eta_floor: float = 1e-10
    tau_clamp: float = 1e-6

    def __post_init__(self):
        if not (self.tol > 0.0 and math.isfinite(self.tol)):
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.eta_floor >= ETA_FLOOR:
            raise ValueError(f"eta_floor must be >= {ETA_FLOOR}, got {self.eta_floor}")
        if not TAU_CLAMP <= self.tau_clamp < 0.5:
            raise ValueError(f"tau_clamp must be in [{TAU_CLAMP}, 0.5), got {self.tau_clamp}")


@dataclass(frozen=True)
class ResponsePanel:
    """Responses for m tissues over the n rows of one shared design.

    Attributes
    ----------
    y : ndarray of shape (n, m)
        Responses; unobserved cells are stored as NaN and never read.
    mask : ndarray of shape (n, m) of bool
        True where observed.  None in the constructor means fully observed.
    tissue_names : tuple of str
        Length m; autogenerated as t1..tm when omitted.
    """

    y: np.ndarray
    mask: np.ndarray = None
    tissue_names: tuple = None

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64, copy=True)
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise BadShape(f"responses must be a nonempty 2-d array, got shape {y.shape}")
        if self.mask is None:
            mask = np.ones(y.shape, dtype=bool)
        else:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != y.shape:
                raise BadShape(f"mask shape {mask.shape} != response shape {y.shape}")
        if not np.all(np.isfinite(y[mask])):
            raise NonFinite("observed responses contain NaN or infinite entries")
        y[~mask] = np.nan
        counts = mask.sum(axis=0)
        if np.any(counts < 1):
            t = int(np.argmin(counts))
            raise BadShape(f"tissue column {t} has no observed rows")
        if self.tissue_names is None:
            names = tuple(f"t{j + 1}" for j in range(y.shape[1]))
        else:
            names = tuple(str(s) for s in self.tissue_names)
            if len(names) != y.shape[1]:
                raise BadShape(f"{len(names)} tissue names for {y.shape[1]} tissues")
        y.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "tissue_names", names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def m(self):
        return self.y.shape[1]

    @property
    def complete(self):
        return bool(self.mask.all())

    def observed_counts(self):
        return self.mask.sum(axis=0)


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit`.

    loglik_trace holds the observed-data log-likelihood at the start of
    every EM iteration; iterations == len(loglik_trace).  converged=False
    just means max_iter was hit, the result is still usable.
    """

    params: PriorParams
    posteriors: list
    loglik_trace: np.ndarray
    iterations: int
    converged: bool


class _SuffStats:
    """Per-tissue second-order statistics in the whitened eigenbasis.

    For tissue t with observed rows X_t, y_t:

        S_t = L^-1 X_t'X_t L^-T = V diag(d) V'
        u_stat[t] = V' L'            (p x p, maps beta to the eigenbasis)
        pb[t]     = V' L^-1 X_t'y_t
        css[t]    = |y_t|^2,  nobs[t] = row count

    Complete data collapses to d = 1, u_stat = L', pb = L^-1 X'y.
    """

    def __init__(self, design, panel):
        x, low = design.x, design.gram_factor
        n, p = design.n, design.p
        m = panel.m
        counts = panel.observed_counts()
        short = counts < p + 1
        if np.any(short):
            t = int(np.argmax(short))
            raise BadShape(
                f"tissue {panel.tissue_names[t]} has {int(counts[t])} observed rows; "
                f"need at least p+1 = {p + 1}"
            )
        self.p = p
        self.m = m
        self.complete = panel.complete
        self.nobs = counts.astype(np.float64)
        if self.complete:
            bt = x.T @ panel.y                                # (p, m)
            pb_cols = solve_triangular(low, bt, lower=True)   # (p, m)
            self.d = np.ones((m, p))
            self.u_stat = np.broadcast_to(low.T, (m, p, p))
            self.pb = np.ascontiguousarray(pb_cols.T)
            self.css = np.einsum("ij,ij->j", panel.y, panel.y)
            self.betahat = solve_triangular(low.T, pb_cols, lower=False).T
            self.rss_ols = np.maximum(self.css - np.sum(self.pb**2, axis=1), 0.0)
        else:
            self.d = np.empty((m, p))
            self.u_stat = np.empty((m, p, p))
            self.pb = np.empty((m, p))
            self.css = np.empty(m)
            self.betahat = np.empty((m, p))
            self.rss_ols = np.empty(m)
            for t in range(m):
                idx = panel.mask[:, t]
                xm = x[idx]
                ym = panel.y[idx, t]
                sub_gram = xm.T @ xm
                sub_gram = 0.5 * (sub_gram + sub_gram.T)
                bt = xm.T @ ym
                sub_factor = _checked_cholesky(
                    sub_gram, f"observed-row X'X for tissue {panel.tissue_names[t]}"
                )
                bhat = cho_solve((sub_factor, True), bt)
                half = solve_triangular(low, sub_gram, lower=True)
                s_mat = solve_triangular(low, half.T, lower=True)
                s_mat = 0.5 * (s_mat + s_mat.T)
                dvals, vecs = np.linalg.eigh(s_mat)
                self.d[t] = np.maximum(dvals, 0.0)
                self.u_stat[t] = (low @ vecs).T
                self.pb[t] = vecs.T @ solve_triangular(low, bt, lower=True)
                self.css[t] = float(ym @ ym)
                self.betahat[t] = bhat
                self.rss_ols[t] = max(self.css[t] - float(bt @ bhat), 0.0)

    def residual_stats(self, beta):
        """(w2, rss) at a shared mean beta; see kernel docs for meaning."""
        z = self.u_stat @ beta                                # (m, p)
        zp = np.einsum("tj,tj->t", z, self.pb)
        zdz = np.einsum("tj,tj,tj->t", z, self.d, z)
        rss = np.maximum(self.css - 2.0 * zp + zdz, 0.0)
        w = self.pb - self.d * z
        return w * w, rss

    def data_scale(self):
        """Average observed second moment; sets golden-section brackets."""
        return max(float(self.css.sum() / self.nobs.sum()), np.finfo(np.float64).tiny)


def _estep_core(stats, params):
    w2, rss = stats.residual_stats(params.beta)
    lg0, lg1 = kernels.component_loglik(
        stats.d, w2, rss, stats.css, stats.nobs, params.sigma2, params.eta
    )
    a0 = math.log(params.tau0) + lg0
    a1 = math.log(params.tau1) + lg1
    loglik = float(np.logaddexp(a0, a1).sum())
    t_one = expit(a1 - a0)
    resp = np.column_stack((1.0 - t_one, t_one))
    return resp, loglik


def _check_resp(resp, m):
    resp = np.asarray(resp, dtype=np.float64)
    if resp.shape != (m, 2):
        raise BadShape(f"responsibilities must have shape ({m}, 2), got {resp.shape}")
    if np.any(resp < -1e-12) or np.any(np.abs(resp.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("responsibility rows must be nonnegative and sum to 1")
    return np.clip(resp, 0.0, 1.0)


def _m_step_complete_core(stats, resp, options):
    t_one = resp[:, 1]
    mass = float(t_one.sum())
    if mass < DEGENERATE_MASS:
        raise DegenerateResponsibilities(
            f"signal responsibility mass {mass:.3g} below {DEGENERATE_MASS}"
        )
    m, p = stats.m, stats.p
    n = float(stats.nobs[0])
    tau1 = clamp_tau(mass / m, options.tau_clamp)
    beta = (stats.betahat.T @ t_one) / mass
    yhy = np.sum(stats.pb**2, axis=1)
    css_total = float(stats.css.sum())
    sigma2 = (css_total - float(t_one @ yhy)) / (m * n - p * mass)
    # L' beta maps the new mean into the same basis as pb
    lt_beta = stats.u_stat[0] @ beta
    col_rss = np.sum((stats.pb - lt_beta) ** 2, axis=1)
    eta = float(t_one @ col_rss) / (p * mass) - sigma2
    if eta < options.eta_floor:
        # boundary case: with eta pinned (effectively 0) the constrained
        # maximizer of the objective pools all residual variation
        eta = options.eta_floor
        sigma2 = (css_total - float(t_one @ yhy) + float(t_one @ col_rss)) / (m * n)
    sigma2 = max(sigma2, np.finfo(np.float64).tiny)
    return PriorParams(tau1=tau1, beta=beta, eta=eta, sigma2=sigma2)


def _golden_max(fun, start, lo, hi, rel_tol=1e-6, max_expand=80):
    """Maximize a unimodal fun over [lo, hi] by golden section in log space.

    Every probe is kept as a candidate, so the returned point is never
    worse than ``start``.
    """
    if not lo > 0.0:
        raise ValueError("golden-section bounds must be positive")
    if hi <= lo * (1.0 + 1e-12):
        return min(max(start, lo), hi)
    start = min(max(start, lo), hi)
    best = [start, fun(start)]

    def probe(u):
        x = math.exp(u)
        val = fun(x)
        if val > best[1]:
            best[0], best[1] = x, val
        return val

    log_lo, log_hi = math.log(lo), math.log(hi)
    step = math.log(8.0)
    ua = max(log_lo, math.log(start) - step)
    ub = min(log_hi, math.log(start) + step)
    probe(ua)
    probe(ub)
    for _ in range(max_expand):
        u_best = math.log(best[0])
        if u_best <= ua + 1e-9 and ua > log_lo + 1e-9:
            ua = max(log_lo, ua - step)
            probe(ua)
        elif u_best >= ub - 1e-9 and ub < log_hi - 1e-9:
            ub = min(log_hi, ub + step)
            probe(ub)
        else:
            break
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    u1 = ub - invphi * (ub - ua)
    u2 = ua + invphi * (ub - ua)
    f1 = probe(u1)
    f2 = probe(u2)
    while ub - ua > rel_tol:
        if f1 >= f2:
            ub, u2, f2 = u2, u1, f1
            u1 = ub - invphi * (ub - ua)
            f1 = probe(u1)
        else:
            ua, u1, f1 = u1, u2, f2
            u2 = ua + invphi * (ub - ua)
            f2 = probe(u2)
    return best[0]


def _m_step_masked_core(stats, resp, current, options, sweeps=3):
    t_zero = np.ascontiguousarray(resp[:, 0])
    t_one = np.ascontiguousarray(resp[:, 1])
    mass = float(t_one.sum())
    tau1 = clamp_tau(mass / stats.m, options.tau_clamp)

    if mass < DEGENERATE_MASS:
        beta = current.beta
    else:
        # GLS at the current variance parameters: each tissue contributes
        # X_t' Sigma_t^-1 X_t and X_t' Sigma_t^-1 y_t, both diagonal in the
        # whitened eigenbasis
        shifted = current.sigma2 + current.eta * stats.d
        wgt = t_one[:, None] * stats.d / shifted
        mat = np.einsum("tji,tj,tjk->ik", stats.u_stat, wgt, stats.u_stat)
        mat = 0.5 * (mat + mat.T)
        vec = np.einsum(
            "tji,tj->i", stats.u_stat, t_one[:, None] * stats.pb / shifted
        )
        factor = _checked_cholesky(mat, "GLS normal matrix")
        beta = cho_solve((factor, True), vec)

    w2, rss = stats.residual_stats(beta)
    d, css, nobs = stats.d, stats.css, stats.nobs

    def objective(sigma2, eta):
        return kernels.weighted_mixture_loglik(
            d, w2, rss, css, nobs, t_zero, t_one, sigma2, eta
        )

    scale = stats.data_scale()
    s2_lo, s2_hi = 1e-12 * scale, 1e12 * scale
    eta_lo, eta_hi = options.eta_floor, 1e14 * scale
    sigma2 = float(min(max(current.sigma2, s2_lo), s2_hi))
    eta = float(min(max(current.eta, eta_lo), eta_hi))
    for _ in range(sweeps):
        sigma2 = _golden_max(lambda v: objective(v, eta), sigma2, s2_lo, s2_hi)
        eta = _golden_max(lambda v: objective(sigma2, v), eta, eta_lo, eta_hi)
    return PriorParams(tau1=tau1, beta=beta, eta=eta, sigma2=sigma2)


def _null_params(stats, options):
    sigma2 = max(stats.css.sum() / stats.nobs.sum(), np.finfo(np.float64).tiny)
    return PriorParams(
        tau1=options.tau_clamp,
        beta=np.zeros(stats.p),
        eta=options.eta_floor,
        sigma2=float(sigma2),
    )


def _init_from_stats(stats, options):
    beta0 = stats.betahat.mean(axis=0)
    dof = float(np.sum(stats.nobs - stats.p))
    floor = 1e-12 * float(stats.css.sum()) / (stats.m * float(stats.nobs.max()))
    sigma2 = max(float(stats.rss_ols.sum()) / dof, floor, np.finfo(np.float64).tiny)
    dev = stats.betahat - beta0
    if stats.complete:
        lt_dev = dev @ stats.u_stat[0].T        # rows L'(betahat - beta0)
    else:
        lt_dev = np.einsum("tij,tj->ti", stats.u_stat, dev)
        # u_stat rows are V'L', so |u_stat dev|^2 = dev' L L' dev as well
    spread = float(np.mean(np.sum(lt_dev**2, axis=1))) / stats.p
    eta0 = max(spread - sigma2, 10.0 * options.eta_floor)
    return PriorParams(tau1=0.5, beta=beta0, eta=eta0, sigma2=sigma2)


def e_step(design, panel, params):
    """Responsibilities and observed-data log-likelihood at ``params``.

    Returns
    -------
    (resp, loglik) : ndarray of shape (m, 2), float
        Rows of resp are (P[null], P[signal]) and sum to 1 exactly.
    """
    return _estep_core(_SuffStats(design, panel), params)


def m_step_complete(design, panel, resp, options=None):
    """Closed-form parameter update for a fully observed panel.

    Raises DegenerateResponsibilities when the signal component has no
    mass; :func:`fit` catches that and returns the null model.
    """
    options = options or FitOptions()
    if not panel.complete:
        raise BadShape("m_step_complete requires a fully observed panel")
    stats = _SuffStats(design, panel)
    return _m_step_complete_core(stats, _check_resp(resp, panel.m), options)


def m_step_masked(design, panel, resp, current, options=None):
    """Generalized M-step tolerating missing rows.

    tau1 and beta update in closed form (beta by responsibility-weighted
    GLS at the current variance parameters); (sigma2, eta) by three sweeps
    of bracketed golden-section ascent.  The EM objective never decreases.
    With zero signal mass beta is kept and tau1 falls to its clamp floor.
    """
    options = options or FitOptions()
    stats = _SuffStats(design, panel)
    return _m_step_masked_core(stats, _check_resp(resp, panel.m), current, options)


def init_params(design, panel):
    """Moment-style starting point from per-tissue least squares."""
    return _init_from_stats(_SuffStats(design, panel), FitOptions())


def fit(design, panel, options=None):
    """Fit the shared prior by EM and summarize every tissue's posterior.

    Parameters
    ----------
    design : Design
    panel : ResponsePanel
        Every tissue needs at least p+1 observed rows.
    options : FitOptions, optional

    Returns
    -------
    FitResult

    Notes
    -----
    Convergence is declared when the observed-data log-likelihood changes
    by at most tol * (1 + |loglik|) between iterations.  If all signal
    responsibility mass vanishes the fit degenerates to the null model
    (tau1 at clamp floor, beta = 0) rather than raising.
    """
    options = options or FitOptions()
    stats = _SuffStats(design, panel)
    params = _init_from_stats(stats, options)
    trace = []
    converged = False
    for _ in range(options.max_iter):
        resp, loglik = _estep_core(stats, params)
        trace.append(loglik)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= options.tol * (1.0 + abs(loglik)):
            converged = True
            break
        try:
            if stats.complete:
                params = _m_step_complete_core(stats, resp, options)
            else:
                params = _m_step_masked_core(stats, resp, params, options)
        except DegenerateResponsibilities:
            params = _null_params(stats, options)
            _, loglik = _estep_core(stats, params)
            trace.append(loglik)
            converged = True
            break
    posteriors = []
    for t in range(panel.m):
        mask_t = None if stats.complete else panel.mask[:, t]
        posteriors.append(tissue_posterior(design, panel.y[:, t], params, mask=mask_t))
    return FitResult(
        params=params,
        posteriors=posteriors,
        loglik_trace=np.asarray(trace, dtype=np.float64),
        iterations=len(trace),
        converged=converged,
    )
