"""Maximum-likelihood and penalized estimation.

The discrepancy minimized is

    F = log det Sigma + Trace(S Sigma^-1) - log det S - P,

zero exactly when the implied matrix reproduces S.  The penalized
variant adds ``nu * sum |omega_ij|`` over the free entries of one chosen
model matrix, with the absolute value smoothed as sqrt(x^2 + tau) so a
single quasi-Newton optimizer serves both objectives.

Positivity of variance and scale parameters is enforced by optimizing
those slots on the log scale.  Points where the implied matrix loses
positive definiteness get a barrier value (last admissible objective
plus a scaled violation), which makes the line search retreat.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import (InvalidModel, NotPositiveDefinite, SingularStructuralMatrix,
                     StartInadmissible)
from .params import ParameterMap, assemble

#: gradient infinity-norm below which a fit counts as converged
DEFAULT_GRADIENT_TOL = 1e-6

#: relative eigenvalue slack when flagging a fitted block as PD
ADMISSIBLE_TOL = 1e-10


@dataclass(frozen=True)
class LassoPenalty:
    """Absolute-value penalty on the free entries of one model matrix."""

    nu: float
    target: str = "omega_theta"
    smoothing_tau: float = 1e-8

    def __post_init__(self):
        if self.nu < 0:
            raise InvalidModel("penalty weight nu must be nonnegative")
        if self.smoothing_tau <= 0:
            raise InvalidModel("smoothing tau must be positive")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Optimizer and objective settings."""

    penalty: LassoPenalty = None
    max_iterations: int = 10000
    gradient_tolerance: float = DEFAULT_GRADIENT_TOL
    barrier_scale: float = 1e4
    start_jitter_seed: int = 0
    start_jitter_retries: int = 10

    def __post_init__(self):
        if self.gradient_tolerance <= 0:
            raise InvalidModel("gradient tolerance must be positive")
        if self.barrier_scale <= 0:
            raise InvalidModel("barrier scale must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged estimates and diagnostics of one fit."""

    spec: object
    params: object
    f_min: float
    objective: float
    converged: bool
    iterations: int
    implied: np.ndarray
    gradient_norm: float
    admissible: bool
    k: int

    @property
    def n_free(self):
        return self.k


# -- objective evaluation ----------------------------------------------------------


def _chol_logdet(sigma, what):
    if not np.all(np.isfinite(sigma)):
        raise NotPositiveDefinite(f"{what} contains non-finite entries")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None
    return chol, 2.0 * float(np.sum(np.log(np.diagonal(chol))))


def _penalty_slots(pmap, penalty):
    if penalty.target not in pmap.spec.matrix_names():
        raise InvalidModel(f"penalty target {penalty.target!r} not in model")
    return pmap.slot_positions(penalty.target)


def _value_and_grad(spec, pmap, values, s, logdet_s, penalty):
    """(objective, plain discrepancy, natural-space gradient)."""
    asm = assemble(spec, pmap, values)
    sigma = asm.sigma
    p = sigma.shape[0]
    chol, logdet = _chol_logdet(sigma, "implied covariance")
    inv_chol = np.linalg.inv(chol)
    sigma_inv = inv_chol.T @ inv_chol
    f_plain = logdet + float(np.sum(sigma_inv * s)) - logdet_s - p

    w = sigma_inv @ (sigma - s) @ sigma_inv
    w = (w + w.T) / 2.0
    grad = np.zeros(pmap.k)
    mats = asm.mats
    M, A, psi_b = asm.M, asm.A, asm.psi_block
    wm = w @ M

    def add(name, core):
        pos, vals = pmap.gather(name, core)
        grad[pos] += vals

    if spec.matrix("lambda").n_free():
        add("lambda", 2.0 * wm @ psi_b @ A.T)
    v = M.T @ wm
    v = (v + v.T) / 2.0
    if "beta" in mats and spec.matrix("beta").n_free():
        add("beta", 2.0 * v @ psi_b @ A.T)
    if spec.psi_mode == "covariance":
        add("psi", v)
    else:
        d = np.diagonal(mats["delta_psi"])
        q = asm.q_psi
        qd = q * d[None, :]
        add("omega_psi", qd @ v @ qd.T)
        add("delta_psi", 2.0 * qd @ v)
    if spec.theta_mode == "covariance":
        add("theta", w)
    else:
        d = np.diagonal(mats["delta_theta"])
        q = asm.q_theta
        qd = q * d[None, :]
        add("omega_theta", qd @ w @ qd.T)
        add("delta_theta", 2.0 * qd @ w)

    f = f_plain
    if penalty is not None and penalty.nu != 0.0:
        pos = _penalty_slots(pmap, penalty)
        x = values[pos]
        smooth = np.sqrt(x * x + penalty.smoothing_tau)
        f = f + penalty.nu * float(np.sum(smooth))
        grad[pos] += penalty.nu * x / smooth
    return f, f_plain, grad


def discrepancy(spec, params, moments):
    """Plain ML discrepancy F at a parameter state.

    Raises ``NotPositiveDefinite`` when the implied matrix (or S) is not
    positive definite at this point.
    """
    logdet_s = moments.log_det_s()
    asm = assemble(spec, params.index, params.values)
    _, logdet = _chol_logdet(asm.sigma, "implied covariance")
    sigma_inv = np.linalg.inv(asm.sigma)
    return logdet + float(np.sum(sigma_inv * moments.s)) - logdet_s - moments.p


def penalized_discrepancy(spec, params, moments, config):
    """Discrepancy plus the configured smoothed-absolute-value penalty."""
    f = discrepancy(spec, params, moments)
    penalty = config.penalty
    if penalty is None or penalty.nu == 0.0:
        return f
    pos = _penalty_slots(params.index, penalty)
    x = params.values[pos]
    return f + penalty.nu * float(np.sum(np.sqrt(x * x + penalty.smoothing_tau)))


def gradient(spec, params, moments, config=None):
    """Analytic gradient of the (penalized) discrepancy w.r.t. the raw vector."""
    penalty = config.penalty if config is not None else None
    _, _, grad = _value_and_grad(spec, params.index, params.values, moments.s,
                                 moments.log_det_s(), penalty)
    return grad


# -- transformed coordinates --------------------------------------------------------


def _to_opt(x, positive):
    z = np.array(x, dtype=float)
    z[positive] = np.log(z[positive])
    return z


def _from_opt(z, positive):
    x = np.array(z, dtype=float)
    x[positive] = np.exp(x[positive])
    return x


def _pd_violation(spec, pmap, values):
    """Spectral deficit of the implied matrix, for barrier magnitudes."""
    try:
        sigma = assemble(spec, pmap, values).sigma
    except (NotPositiveDefinite, SingularStructuralMatrix):
        return 1.0
    if not np.all(np.isfinite(sigma)):
        return 1.0
    eigs = np.linalg.eigvalsh(sigma)
    return max(0.0, -float(eigs[0]))


def _block_is_pd(block):
    eigs = np.linalg.eigvalsh((block + block.T) / 2.0)
    return eigs[0] > -ADMISSIBLE_TOL * max(1.0, abs(eigs[-1]))


def _admissible(spec, pmap, values):
    try:
        asm = assemble(spec, pmap, values)
    except (NotPositiveDefinite, SingularStructuralMatrix):
        return False
    blocks = [asm.sigma, asm.theta_block]
    if spec.m > 0:
        blocks.append(asm.psi_block)
    return all(np.all(np.isfinite(b)) and _block_is_pd(b) for b in blocks)


# -- fitting ------------------------------------------------------------------------


def fit(spec, moments, config=None, start=None):
    """Minimize the (penalized) discrepancy; returns a :class:`FitResult`.

    Deterministic given the spec, moments, config, and starting point.
    Starting values come from the spec unless ``start`` overrides them;
    an inadmissible start is jittered up to ``start_jitter_retries``
    times with a seeded generator before ``StartInadmissible`` is raised.
    Non-convergence is not an exception: the best point is returned with
    ``converged=False``.
    """
    config = config if config is not None else ObjectiveConfig()
    pmap = ParameterMap(spec)
    logdet_s = moments.log_det_s()
    if moments.p != spec.p:
        raise InvalidModel("model and sample dimensions differ")
    base = pmap.start if start is None else np.asarray(start, dtype=float)
    if base.shape != (pmap.k,):
        raise InvalidModel(f"start vector must have length {pmap.k}")
    penalty = config.penalty
    if penalty is not None:
        _penalty_slots(pmap, penalty)

    def try_eval(x):
        return _value_and_grad(spec, pmap, x, moments.s, logdet_s, penalty)

    x0, f0 = None, None
    rng = np.random.default_rng(config.start_jitter_seed)
    for attempt in range(config.start_jitter_retries + 1):
        cand = base if attempt == 0 else base + rng.uniform(-0.01, 0.01, pmap.k)
        cand = np.array(cand, dtype=float)
        cand[pmap.positive] = np.maximum(cand[pmap.positive], 1e-6)
        try:
            f0 = try_eval(cand)[0]
            x0 = cand
            break
        except (NotPositiveDefinite, SingularStructuralMatrix):
            continue
    if x0 is None:
        raise StartInadmissible("no admissible starting point after jitter retries")

    if pmap.k == 0:
        f, f_plain, _ = try_eval(x0)
        return FitResult(spec=spec, params=pmap.state(x0), f_min=f_plain,
                         objective=f, converged=True, iterations=0,
                         implied=assemble(spec, pmap, x0).sigma,
                         gradient_norm=0.0, admissible=_admissible(spec, pmap, x0),
                         k=0)

    positive = pmap.positive
    state = {"f_last": f0, "best": (f0, x0.copy())}

    def objective(z):
        x = _from_opt(z, positive)
        try:
            f, _, g_nat = try_eval(x)
        except (NotPositiveDefinite, SingularStructuralMatrix):
            barrier = state["f_last"] + config.barrier_scale * (
                1.0 + _pd_violation(spec, pmap, x))
            return barrier, np.zeros_like(z)
        state["f_last"] = f
        if f < state["best"][0]:
            state["best"] = (f, x.copy())
        g = np.array(g_nat)
        g[positive] *= x[positive]
        return f, g

    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore")
        res = scipy.optimize.minimize(
            objective, _to_opt(x0, positive), jac=True, method="BFGS",
            options={"gtol": config.gradient_tolerance,
                     "maxiter": config.max_iterations})

    x_hat = _from_opt(res.x, positive)
    try:
        f, f_plain, g_nat = try_eval(x_hat)
    except (NotPositiveDefinite, SingularStructuralMatrix):
        x_hat = state["best"][1]
        f, f_plain, g_nat = try_eval(x_hat)
    if f > state["best"][0]:
        x_hat = state["best"][1]
        f, f_plain, g_nat = try_eval(x_hat)
    g_opt = np.array(g_nat)
    g_opt[positive] *= x_hat[positive]
    gnorm = float(np.max(np.abs(g_opt), initial=0.0))
    return FitResult(
        spec=spec,
        params=pmap.state(x_hat),
        f_min=f_plain,
        objective=f,
        converged=bool(gnorm <= config.gradient_tolerance),
        iterations=int(res.nit),
        implied=assemble(spec, pmap, x_hat).sigma,
        gradient_norm=gnorm,
        admissible=_admissible(spec, pmap, x_hat),
        k=pmap.k,
    )
