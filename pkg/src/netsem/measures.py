"""Fit statistics and model comparison.

chi-square uses the (N - 1) multiplier, matching the (N - 1) divisor of
the sample covariance matrix.  Information criteria are reported in two
conventions: chi-square based (AIC = chi2 + 2K) and -2 log-likelihood
based (adding the model-free constant N P log 2pi + (N - 1)(log det S + P)).
Differences between models are identical under both.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .errors import DegenerateBaseline, NotPositiveDefinite, NotNested
from .estimator import FitResult, discrepancy, gradient
from .models import count_free_parameters, covariance_model
from .params import ParameterMap


@dataclass(frozen=True)
class FitMeasures:
    """Fit-measure bundle for one fitted model."""

    chisq: float
    df: int
    p_value: float
    aic: float
    bic: float
    ebic: float
    gamma: float
    rmsea: float
    cfi: float
    tli: float
    f_min: float
    k: int
    n: int
    saturated: bool
    aic_loglik: float
    bic_loglik: float
    ebic_loglik: float
    baseline_chisq: float
    baseline_df: int

    def criterion(self, name):
        if name not in ("aic", "bic", "ebic"):
            raise ValueError(f"not an information criterion: {name!r}")
        return getattr(self, name)


def independence_baseline(moments):
    """Closed-form fit of the diagonal (independence) covariance model."""
    s_diag = np.diagonal(moments.s)
    if np.any(s_diag <= 0.0):
        raise DegenerateBaseline("sample variances must be positive")
    spec = covariance_model(moments.p, diagonal_only=True,
                            var_names=moments.labels)
    pmap = ParameterMap(spec)
    params = pmap.state(s_diag.copy())
    try:
        f = discrepancy(spec, params, moments)
        gnorm = float(np.max(np.abs(gradient(spec, params, moments)), initial=0.0))
    except NotPositiveDefinite as err:
        raise DegenerateBaseline(str(err)) from None
    return FitResult(spec=spec, params=params, f_min=f, objective=f,
                     converged=True, iterations=0, implied=np.diag(s_diag),
                     gradient_norm=gnorm, admissible=True, k=moments.p)


def _measures_from_f(f_min, k, p, n, gamma, baseline_chisq, baseline_df,
                     loglik_constant):
    """Assemble the measure bundle from raw ingredients (testable core)."""
    df = p * (p + 1) // 2 - k
    chisq = max(0.0, (n - 1) * f_min)
    saturated = df == 0
    p_value = 1.0 if saturated else float(chi2_dist.sf(chisq, df))
    rmsea = 0.0 if saturated else math.sqrt(max(chisq - df, 0.0) / (df * (n - 1)))
    excess = max(chisq - df, 0.0)
    denom = max(chisq - df, baseline_chisq - baseline_df, 0.0)
    cfi = 1.0 if denom == 0.0 else 1.0 - excess / denom
    if saturated or baseline_df == 0:
        tli = 1.0
    else:
        base_ratio = baseline_chisq / baseline_df
        if abs(base_ratio - 1.0) < 1e-12:
            tli = 1.0
        else:
            tli = (base_ratio - chisq / df) / (base_ratio - 1.0)
    aic = chisq + 2.0 * k
    bic = chisq + k * math.log(n)
    ebic = bic + 2.0 * gamma * k * math.log(p * (p + 1) / 2.0)
    return FitMeasures(
        chisq=chisq, df=df, p_value=p_value,
        aic=aic, bic=bic, ebic=ebic, gamma=gamma,
        rmsea=rmsea, cfi=cfi, tli=tli,
        f_min=f_min, k=k, n=n, saturated=saturated,
        aic_loglik=aic + loglik_constant,
        bic_loglik=bic + loglik_constant,
        ebic_loglik=ebic + loglik_constant,
        baseline_chisq=baseline_chisq, baseline_df=baseline_df,
    )


def compute_measures(fit, moments, gamma=0.5, k_override=None):
    """Fit-measure bundle for a fit result.

    ``k_override`` replaces the parameter count, used by the LASSO path
    where parameters below the zero threshold do not count toward K or
    degrees of freedom.
    """
    baseline = independence_baseline(moments)
    k_base, _ = count_free_parameters(baseline.spec)
    n = moments.n
    baseline_chisq = max(0.0, (n - 1) * baseline.f_min)
    baseline_df = moments.p * (moments.p + 1) // 2 - k_base
    constant = (n * moments.p * math.log(2.0 * math.pi)
                + (n - 1) * (moments.log_det_s() + moments.p))
    k = fit.k if k_override is None else int(k_override)
    return _measures_from_f(fit.f_min, k, moments.p, n, gamma,
                            baseline_chisq, baseline_df, constant)


def lr_test(restricted, full, moments):
    """Likelihood-ratio test of nested fits.

    The caller asserts nesting (restricted's free set inside full's);
    only the parameter-count direction is checked here.  Returns
    ``(delta_chisq, delta_df, p)``.
    """
    delta_df = full.k - restricted.k
    if delta_df < 0:
        raise NotNested("restricted model has more free parameters than full")
    delta_chisq = max(0.0, (moments.n - 1) * (restricted.f_min - full.f_min))
    if delta_df == 0:
        if delta_chisq > 1e-8:
            raise NotNested("equal parameter counts but different fit; "
                            "models are not nested")
        return 0.0, 0, 1.0
    return delta_chisq, delta_df, float(chi2_dist.sf(delta_chisq, delta_df))
