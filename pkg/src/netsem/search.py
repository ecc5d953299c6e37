"""Exploratory network search.

Two procedures over the edge set of one network matrix (``omega_psi`` or
``omega_theta``):

* stepwise: at each step every unique off-diagonal slot is toggled (add
  if absent, remove if present) and the model refit; a toggle is kept
  when it passes the chi-square difference rule or improves an
  information criterion, until no toggle qualifies;
* penalized path: fit a sequence of increasing penalty weights, count
  parameters above the zero threshold, pick the best criterion value,
  and refit without penalty with sub-threshold entries fixed to zero.

Candidate fits are warm-started from the incumbent fit and cached by
edge set, so repeated searches on the same data (e.g. several criteria)
share work.  Failed candidate fits are skipped and recorded.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AllPathsFailed, EmptyModelSpace, InvalidModel
from .estimator import LassoPenalty, ObjectiveConfig, fit
from .measures import compute_measures, lr_test
from .models import set_network_edges
from .params import ParameterMap

#: gradient norm under which a non-converged candidate still counts as usable
USABLE_GRADIENT_TOL = 1e-4

CRITERIA = ("chisq", "aic", "bic", "ebic")
IC_CRITERIA = ("aic", "bic", "ebic")


def _default_initial(target):
    # latent networks start saturated, residual networks start empty
    return "full" if target == "omega_psi" else "empty"


@dataclass(frozen=True)
class SearchConfig:
    """Settings for the stepwise procedure."""

    target: str
    criterion: str = "bic"
    alpha: float = 0.05
    gamma: float = 0.5
    initial: object = None
    max_steps: int = 100

    def __post_init__(self):
        if self.target not in ("omega_psi", "omega_theta"):
            raise InvalidModel(f"unknown search target: {self.target!r}")
        if self.criterion not in CRITERIA:
            raise InvalidModel(f"unknown criterion: {self.criterion!r}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidModel("alpha must lie in (0, 1)")
        if self.max_steps < 1:
            raise InvalidModel("max_steps must be at least 1")


@dataclass(frozen=True)
class TraceStep:
    action: str
    edge: tuple
    criterion_value: float
    accepted: bool


@dataclass
class SearchTrace:
    """Per-step record of one stepwise search."""

    steps: list
    failures: list
    initial_edges: frozenset
    final_edges: frozenset
    final_spec: object
    final_fit: object
    criterion: str
    n_fits: int


def _all_slots(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _normalize_edges(edges):
    return frozenset((min(i, j), max(i, j)) for i, j in edges)


def _usable(fit_result):
    return fit_result.converged or fit_result.gradient_norm <= USABLE_GRADIENT_TOL


def _warm_start(pmap, reference_fit):
    if reference_fit is None:
        return None
    ref = dict(zip(reference_fit.params.index.slots, reference_fit.params.values))
    start = pmap.start.copy()
    for pos, slot in enumerate(pmap.slots):
        if slot in ref:
            start[pos] = ref[slot]
    return start


class _FitCache:
    """Memoized edge-set -> fit, shared across criteria on the same data."""

    def __init__(self, spec, moments, target, fit_config, store=None):
        self.spec = spec
        self.moments = moments
        self.target = target
        self.fit_config = fit_config
        self.store = store if store is not None else {}
        self.n_fits = 0

    def get(self, edges, warm_from=None):
        key = frozenset(edges)
        if key in self.store:
            return self.store[key]
        candidate = set_network_edges(self.spec, self.target, key)
        start = _warm_start(ParameterMap(candidate), warm_from)
        result = fit(candidate, self.moments, self.fit_config, start=start)
        self.n_fits += 1
        self.store[key] = result
        return result


def stepwise_search(spec, moments, config, fit_config=None, cache=None):
    """Stepwise edge search on one network matrix; returns a trace.

    Ties between equally good toggles break toward the lowest (i, j)
    pair, so results do not depend on evaluation order.
    """
    fit_config = fit_config if fit_config is not None else ObjectiveConfig()
    target_spec = spec.network_target(config.target)
    n_nodes = target_spec.rows
    slots = _all_slots(n_nodes)
    if not slots:
        raise EmptyModelSpace("network has no off-diagonal slots")

    initial = config.initial if config.initial is not None \
        else _default_initial(config.target)
    if initial == "empty":
        current_edges = frozenset()
    elif initial == "full":
        current_edges = frozenset(slots)
    else:
        current_edges = _normalize_edges(initial)

    cache = _FitCache(spec, moments, config.target, fit_config, store=cache)
    current_fit = cache.get(current_edges)
    if not _usable(current_fit):
        raise AllPathsFailed("initial model did not converge")
    use_ic = config.criterion in IC_CRITERIA
    current_ic = compute_measures(current_fit, moments, gamma=config.gamma) \
        .criterion(config.criterion) if use_ic else None

    steps, failures = [], []
    for _ in range(config.max_steps):
        best_add = None     # (dchi, p, edge, fit) for chisq; (ic, edge, fit) for IC
        best_remove = None
        best_ic = None
        for edge in slots:
            present = edge in current_edges
            candidate_edges = (current_edges - {edge}) if present \
                else (current_edges | {edge})
            try:
                cand = cache.get(candidate_edges, warm_from=current_fit)
            except Exception as err:  # noqa: BLE001 - candidate failures are data
                failures.append((("remove" if present else "add"), edge, repr(err)))
                continue
            if not _usable(cand):
                failures.append((("remove" if present else "add"), edge,
                                 f"gradient_norm={cand.gradient_norm:.3g}"))
                continue
            if use_ic:
                ic = compute_measures(cand, moments, gamma=config.gamma) \
                    .criterion(config.criterion)
                key = (ic, edge)
                if best_ic is None or key < best_ic[:2]:
                    best_ic = (ic, edge, cand, "remove" if present else "add")
            elif present:
                dchi, _, p = lr_test(cand, current_fit, moments)
                if p >= config.alpha:  # removal does not significantly worsen fit
                    key = (dchi, edge)
                    if best_remove is None or key < best_remove[:2]:
                        best_remove = (dchi, edge, cand, p)
            else:
                dchi, _, p = lr_test(current_fit, cand, moments)
                if p < config.alpha:  # addition significantly improves fit
                    key = (-dchi, edge)
                    if best_add is None or key < (-best_add[0], best_add[1]):
                        best_add = (dchi, edge, cand, p)

        if use_ic:
            if best_ic is None or best_ic[0] >= current_ic:
                break
            ic, edge, cand, action = best_ic
            steps.append(TraceStep(action, edge, ic, True))
            current_ic = ic
        elif best_add is not None:
            dchi, edge, cand, p = best_add
            steps.append(TraceStep("add", edge, p, True))
        elif best_remove is not None:
            dchi, edge, cand, p = best_remove
            steps.append(TraceStep("remove", edge, p, True))
        else:
            break
        current_fit = cand
        current_edges = frozenset(current_fit.spec.network_target(config.target)
                                  .free_slots())

    return SearchTrace(
        steps=steps, failures=failures,
        initial_edges=_normalize_edges(
            slots if initial == "full" else ([] if initial == "empty" else initial)),
        final_edges=current_edges,
        final_spec=current_fit.spec, final_fit=current_fit,
        criterion=config.criterion, n_fits=cache.n_fits,
    )


# -- penalized path ---------------------------------------------------------------


def default_nu_grid(low=0.01, high=1.0, count=20):
    """Logarithmically spaced penalty weights (the default path)."""
    return tuple(np.geomspace(low, high, count))


@dataclass(frozen=True)
class LassoPathConfig:
    """Settings for the penalized-path procedure."""

    target: str = "omega_theta"
    nu_sequence: tuple = field(default_factory=default_nu_grid)
    epsilon: float = 1e-4
    criterion: str = "ebic"
    gamma: float = 0.5
    smoothing_tau: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "nu_sequence",
                           tuple(float(v) for v in self.nu_sequence))
        seq = np.asarray(self.nu_sequence)
        if seq.size == 0 or np.any(seq <= 0) or np.any(np.diff(seq) <= 0):
            raise InvalidModel("nu sequence must be positive and strictly increasing")
        if self.epsilon <= 0:
            raise InvalidModel("epsilon must be positive")
        if self.criterion not in IC_CRITERIA:
            raise InvalidModel(f"unknown criterion: {self.criterion!r}")
        if self.target not in ("omega_psi", "omega_theta"):
            raise InvalidModel(f"unknown search target: {self.target!r}")


@dataclass(frozen=True)
class PathRecord:
    nu: float
    usable: bool
    n_selected: int
    selected: frozenset
    aic: float
    bic: float
    ebic: float
    f_min: float


@dataclass
class LassoResult:
    best_nu: float
    selected: frozenset
    refit: object
    path: list
    criterion: str


def lasso_path(spec, moments, config, fit_config=None):
    """Penalized fits along the nu grid, warm-started at each step.

    Records, per nu, the edges whose absolute estimate exceeds epsilon
    and the information criteria computed with that count as K.
    """
    fit_config = fit_config if fit_config is not None else ObjectiveConfig()
    target_spec = spec.network_target(config.target)
    all_slots = _all_slots(target_spec.rows)
    if frozenset(target_spec.free_slots()) != frozenset(all_slots):
        raise InvalidModel("penalized path requires a fully free target network")
    pmap = ParameterMap(spec)
    target_pos = pmap.slot_positions(config.target)
    n_target = len(target_pos)

    records = []
    warm = None
    for nu in config.nu_sequence:
        penalized = replace(fit_config,
                            penalty=LassoPenalty(nu=nu, target=config.target,
                                                 smoothing_tau=config.smoothing_tau))
        try:
            result = fit(spec, moments, penalized, start=warm)
        except Exception:  # noqa: BLE001 - a failed nu is skipped, not fatal
            records.append(PathRecord(nu, False, 0, frozenset(),
                                      np.nan, np.nan, np.nan, np.nan))
            continue
        if not _usable(result):
            records.append(PathRecord(nu, False, 0, frozenset(),
                                      np.nan, np.nan, np.nan, np.nan))
            continue
        warm = result.params.values
        values = result.params.values[target_pos]
        keep = np.abs(values) > config.epsilon
        target_slots = [pmap.slots[pos][1:] for pos in target_pos]
        selected = frozenset(slot for slot, kept in zip(target_slots, keep) if kept)
        k_eff = (pmap.k - n_target) + int(keep.sum())
        meas = compute_measures(result, moments, gamma=config.gamma,
                                k_override=k_eff)
        records.append(PathRecord(nu, True, int(keep.sum()), selected,
                                  meas.aic, meas.bic, meas.ebic, result.f_min))
    if not any(r.usable for r in records):
        raise AllPathsFailed("no penalty weight on the path produced a usable fit")
    return records


def select_from_path(records, criterion):
    """Best usable path record under one criterion (ties: smallest nu)."""
    best = None
    for rec in records:
        if not rec.usable:
            continue
        value = getattr(rec, criterion)
        if best is None or value < getattr(best, criterion):
            best = rec
    return best


def lasso_search(spec, moments, config, fit_config=None, path=None):
    """Penalized path, criterion-based selection, and unpenalized refit.

    The refit fixes sub-epsilon entries to zero and frees exactly the
    selected edges, so its fit measures are comparable to unpenalized
    models.  A precomputed ``path`` may be passed to share one path
    across several criteria.
    """
    fit_config = fit_config if fit_config is not None else ObjectiveConfig()
    if path is None:
        path = lasso_path(spec, moments, config, fit_config)
    best = select_from_path(path, config.criterion)
    refit_spec = set_network_edges(spec, config.target, best.selected)
    refit = fit(refit_spec, moments, fit_config)
    return LassoResult(best_nu=best.nu, selected=best.selected, refit=refit,
                       path=path, criterion=config.criterion)
