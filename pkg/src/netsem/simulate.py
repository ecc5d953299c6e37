"""True-model generation, data sampling, and the simulation-study harness.

Networks are generated by the Yin-Li recipe: draw edge weights uniformly
from [0.5, 1] with a 50% sign flip, set each diagonal of the precision
matrix to 1.5 times the row's absolute sum (or 1 for isolated nodes),
divide rows by their diagonal, then symmetrize by averaging the
triangles.  On the chain (ring) topologies used in the studies this
yields nonzero partial correlations with mean 0.33 and sd 0.04.

The four study designs:

1. latent network, stepwise search: 4 latent variables (3 indicators
   each) in a chain;
2. residual network, stepwise search: 2 latent variables (5 indicators
   each), residual chain alternating between the factors' indicators;
3. latent network, penalized search: study 1 scaled to 8 latent
   variables (24 observed);
4. residual network, penalized search: study 2 scaled to 4 latent
   variables (20 observed), one residual chain per consecutive factor
   pair.

Chains are closed (last node linked back to the first): every node has
degree 2, which is what makes the structure unrepresentable as a
directed model and reproduces the documented weight statistics.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModel, NetsemError, NotPositiveDefinite
from .estimator import ObjectiveConfig
from .matrices import MatrixSpec
from .models import ModelSpec, lnm_model, rnm_model
from .params import ParameterMap, SampleMoments, implied_covariance, precision_to_network
from .search import (LassoPathConfig, SearchConfig, lasso_path, lasso_search,
                     select_from_path, stepwise_search, _usable)

#: seed-derivation tags so distinct random streams never collide
_TAG_TRUTH, _TAG_DATA = 1, 2


def ring_edges(n):
    """Closed chain over n nodes: consecutive pairs plus the closing edge."""
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]


def alternating_ring(block_a, block_b):
    """Closed chain visiting a1, b1, a2, b2, ... and returning to a1.

    Links every node of one block to exactly two nodes of the other,
    which is the cross-factor residual chain of the study designs.
    """
    if len(block_a) != len(block_b):
        raise InvalidModel("blocks must have equal length")
    order = [x for pair in zip(block_a, block_b) for x in pair]
    edges = [(order[i], order[i + 1]) for i in range(len(order) - 1)]
    edges.append((order[-1], order[0]))
    return [(min(i, j), max(i, j)) for i, j in edges]


@dataclass(frozen=True)
class NetworkGeneratorConfig:
    """Settings for the precision-matrix generator."""

    n_nodes: int
    structure: object = "chain"
    weight_low: float = 0.5
    weight_high: float = 1.0
    negative_prob: float = 0.5
    diagonal_factor: float = 1.5
    seed: object = 0
    max_retries: int = 50

    def __post_init__(self):
        if self.weight_low >= self.weight_high:
            raise InvalidModel("need weight_low < weight_high")
        if not 0.0 <= self.negative_prob <= 1.0:
            raise InvalidModel("negative_prob must lie in [0, 1]")


@dataclass(frozen=True)
class GeneratedNetwork:
    k: np.ndarray
    omega: np.ndarray
    edges: tuple
    retries: int


def _seed_tuple(seed, *extra):
    base = seed if isinstance(seed, (tuple, list)) else (seed,)
    return tuple(int(v) for v in base) + tuple(int(v) for v in extra)


def generate_network(config):
    """Generate a PD precision matrix and its partial-correlation network.

    Non-PD draws are retried with a seed derived from (seed, retry
    index); the retry count is reported.
    """
    n = config.n_nodes
    edges = ring_edges(n) if config.structure == "chain" \
        else [(min(i, j), max(i, j)) for i, j in config.structure]
    for retry in range(config.max_retries + 1):
        rng = np.random.default_rng(_seed_tuple(config.seed, retry))
        k = np.zeros((n, n))
        for i, j in edges:
            w = rng.uniform(config.weight_low, config.weight_high)
            if rng.random() < config.negative_prob:
                w = -w
            k[i, j] = k[j, i] = w
        row_sums = np.sum(np.abs(k), axis=1)
        diag = np.where(row_sums > 0.0, config.diagonal_factor * row_sums, 1.0)
        k = k / diag[:, None]
        np.fill_diagonal(k, 1.0)
        k = (k + k.T) / 2.0
        if np.linalg.eigvalsh(k)[0] > 0.0:
            omega, _ = precision_to_network(k)
            k.flags.writeable = False
            omega.flags.writeable = False
            return GeneratedNetwork(k=k, omega=omega, edges=tuple(edges),
                                    retries=retry)
    raise NotPositiveDefinite(
        f"no positive-definite draw in {config.max_retries + 1} attempts")


# -- data sampling -----------------------------------------------------------------


def sample_raw(sigma, n, seed):
    """n multivariate-normal rows with covariance sigma (seeded)."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("population covariance is not PD") from None
    rng = np.random.default_rng(_seed_tuple(seed))
    return rng.standard_normal((n, sigma.shape[0])) @ chol.T


def moments_from_raw(y, labels=None):
    """Column-center and form S with the (N - 1) divisor."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 2:
        raise InvalidModel("need at least 2 rows")
    centered = y - y.mean(axis=0)
    s = centered.T @ centered / (n - 1)
    s = (s + s.T) / 2.0
    return SampleMoments(s=s, n=n, labels=labels)


def sample_data(true_model, n, seed, labels=None):
    """Sample moments from a true model (a ModelSpec with values, or Sigma)."""
    if isinstance(true_model, ModelSpec):
        pmap = ParameterMap(true_model)
        sigma = implied_covariance(true_model, pmap.state())
        labels = labels if labels is not None else true_model.var_names
    else:
        sigma = np.asarray(true_model, dtype=float)
    return moments_from_raw(sample_raw(sigma, n, seed), labels=labels)


def score_network(estimated, truth, n_nodes):
    """Sensitivity and specificity of an edge set against the truth.

    Ratios over the unique off-diagonal slots; an undefined ratio (zero
    denominator) comes back as None, never as 0 or 1.
    """
    est = frozenset((min(i, j), max(i, j)) for i, j in estimated)
    tru = frozenset((min(i, j), max(i, j)) for i, j in truth)
    n_slots = n_nodes * (n_nodes - 1) // 2
    tp = len(est & tru)
    fn = len(tru - est)
    fp = len(est - tru)
    tn = n_slots - tp - fn - fp
    sensitivity = tp / (tp + fn) if (tp + fn) else None
    specificity = tn / (tn + fp) if (tn + fp) else None
    return sensitivity, specificity


# -- study designs -----------------------------------------------------------------


def _fixed_loadings(m, per):
    p = m * per
    values = np.zeros((p, m))
    for j in range(m):
        values[j * per:(j + 1) * per, j] = 1.0
    return MatrixSpec.fixed(values)


def _fixed_cov(m, off):
    values = np.full((m, m), float(off))
    np.fill_diagonal(values, 1.0)
    return MatrixSpec.fixed(values, symmetry="symmetric")


def _true_latent_network_model(m, per, omega):
    """Loadings 1, residual variances 1, latent GGM with unit scale."""
    p = m * per
    return ModelSpec(
        p=p, m=m, lambda_=_fixed_loadings(m, per),
        psi_mode="network",
        omega_psi=MatrixSpec.fixed(omega, symmetry="symmetric_zero_diagonal"),
        delta_psi=MatrixSpec.fixed(np.eye(m), symmetry="diagonal"),
        theta_mode="covariance",
        theta=MatrixSpec.fixed(np.eye(p), symmetry="diagonal"),
    )


def _true_residual_network_model(m, per, omega, factor_cov=0.25):
    """Loadings 1, factor covariances 0.25, residual GGM with unit scale."""
    p = m * per
    return ModelSpec(
        p=p, m=m, lambda_=_fixed_loadings(m, per),
        psi_mode="covariance", psi=_fixed_cov(m, factor_cov),
        theta_mode="network",
        omega_theta=MatrixSpec.fixed(omega, symmetry="symmetric_zero_diagonal"),
        delta_theta=MatrixSpec.fixed(np.eye(p), symmetry="diagonal"),
    )


@dataclass(frozen=True)
class StudyDesign:
    study: int
    kind: str                  # "stepwise" | "lasso"
    target: str
    m: int
    per_factor: int
    initial: str
    desk_n_grid: tuple
    paper_n_grid: tuple
    criteria: tuple
    residual_pairing: tuple = None   # factor pairs carrying residual chains

    @property
    def p(self):
        return self.m * self.per_factor

    @property
    def n_network_nodes(self):
        return self.m if self.target == "omega_psi" else self.p

    def truth_edges(self):
        if self.target == "omega_psi":
            return sorted(ring_edges(self.m))
        edges = []
        for a, b in self.residual_pairing:
            block_a = list(range(a * self.per_factor, (a + 1) * self.per_factor))
            block_b = list(range(b * self.per_factor, (b + 1) * self.per_factor))
            edges.extend(alternating_ring(block_a, block_b))
        return sorted(edges)

    def make_truth(self, seed):
        edges = self.truth_edges()
        gen = generate_network(NetworkGeneratorConfig(
            n_nodes=self.n_network_nodes, structure=edges, seed=seed))
        if self.target == "omega_psi":
            spec = _true_latent_network_model(self.m, self.per_factor, gen.omega)
        else:
            spec = _true_residual_network_model(self.m, self.per_factor, gen.omega)
        return spec, frozenset(edges), gen.retries

    def make_search_spec(self):
        if self.target == "omega_psi":
            return lnm_model(self.p, self.m)
        return rnm_model(self.p, self.m, residual_edges=None)


_DESIGNS = {
    1: StudyDesign(study=1, kind="stepwise", target="omega_psi", m=4,
                   per_factor=3, initial="full",
                   desk_n_grid=(100, 500, 1000),
                   paper_n_grid=(50, 100, 250, 500, 1000),
                   criteria=("chisq", "aic", "bic", "ebic")),
    2: StudyDesign(study=2, kind="stepwise", target="omega_theta", m=2,
                   per_factor=5, initial="empty",
                   desk_n_grid=(250, 1000),
                   paper_n_grid=(50, 100, 250, 500, 1000),
                   criteria=("chisq", "aic", "bic", "ebic"),
                   residual_pairing=((0, 1),)),
    3: StudyDesign(study=3, kind="lasso", target="omega_psi", m=8,
                   per_factor=3, initial="full",
                   desk_n_grid=(500, 2500),
                   paper_n_grid=(100, 250, 500, 1000, 2500),
                   criteria=("aic", "bic", "ebic")),
    4: StudyDesign(study=4, kind="lasso", target="omega_theta", m=4,
                   per_factor=5, initial="empty",
                   desk_n_grid=(500, 2500),
                   paper_n_grid=(100, 250, 500, 1000, 2500),
                   criteria=("aic", "bic", "ebic"),
                   residual_pairing=((0, 1), (2, 3))),
}


def study_design(study):
    if study not in _DESIGNS:
        raise InvalidModel(f"unknown study: {study!r} (expected 1-4)")
    return _DESIGNS[study]


# -- running studies ---------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """One study run; defaults are desk scale (full_scale restores paper scale)."""

    study: int
    replications: int = None
    n_grid: tuple = None
    criteria: tuple = None
    seed: int = 0
    gamma: float = 0.5
    full_scale: bool = False
    n_jobs: int = 1
    max_steps: int = 60

    def __post_init__(self):
        design = study_design(self.study)
        if self.replications is None:
            object.__setattr__(self, "replications",
                               1000 if self.full_scale else 100)
        if self.replications < 1:
            raise InvalidModel("need at least one replication")
        n_grid = self.n_grid
        if n_grid is None:
            n_grid = design.paper_n_grid if self.full_scale else design.desk_n_grid
        object.__setattr__(self, "n_grid", tuple(int(n) for n in n_grid))
        criteria = self.criteria if self.criteria is not None else design.criteria
        object.__setattr__(self, "criteria", tuple(criteria))
        for crit in self.criteria:
            if crit not in design.criteria:
                raise InvalidModel(f"criterion {crit!r} not valid for study {self.study}")


@dataclass(frozen=True)
class StudyRow:
    study: int
    replication: int
    n: int
    criterion: str
    sensitivity: float
    specificity: float
    converged: bool
    n_edges_true: int
    n_edges_est: int
    generator_retries: int
    runtime: float
    error: str = None


@dataclass
class StudyResult:
    """Per-replication study records plus aggregation helpers."""

    study: int
    seed: int
    n_grid: tuple
    criteria: tuple
    replications: int
    rows: list = field(default_factory=list)

    _COLUMNS = ("study", "replication", "n", "criterion", "sensitivity",
                "specificity", "converged", "n_edges_true", "n_edges_est",
                "generator_retries")

    def to_table(self, include_runtime=False):
        """Tab-delimited table, one row per (replication, n, criterion).

        Wall-clock runtimes are excluded by default so that repeated runs
        with the same seed produce byte-identical tables.
        """
        cols = self._COLUMNS + (("runtime",) if include_runtime else ())
        lines = ["\t".join(cols)]
        for row in self.rows:
            cells = []
            for col in cols:
                value = getattr(row, col)
                if value is None:
                    cells.append("NA")
                elif isinstance(value, bool):
                    cells.append("1" if value else "0")
                elif isinstance(value, float):
                    cells.append(f"{value:.6g}")
                else:
                    cells.append(str(value))
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def summary(self, converged_only=False):
        """Mean sensitivity/specificity per (n, criterion) cell."""
        cells = {}
        for row in self.rows:
            if converged_only and not row.converged:
                continue
            cells.setdefault((row.n, row.criterion), []).append(row)
        out = []
        for (n, criterion) in sorted(cells, key=lambda c: (c[0], c[1])):
            rows = cells[(n, criterion)]
            sens = [r.sensitivity for r in rows if r.sensitivity is not None]
            spec = [r.specificity for r in rows if r.specificity is not None]
            out.append({
                "n": n, "criterion": criterion,
                "mean_sensitivity": float(np.mean(sens)) if sens else None,
                "mean_specificity": float(np.mean(spec)) if spec else None,
                "n_rows": len(rows),
                "n_converged": sum(1 for r in rows if r.converged),
                "n_failed": sum(1 for r in rows if r.error is not None),
            })
        return out

    def summary_table(self):
        cols = ("n", "criterion", "mean_sensitivity", "mean_specificity",
                "n_rows", "n_converged", "n_failed")
        lines = ["\t".join(cols)]
        for cell in self.summary():
            cells = []
            for col in cols:
                value = cell[col]
                if value is None:
                    cells.append("NA")
                elif isinstance(value, float):
                    cells.append(f"{value:.4f}")
                else:
                    cells.append(str(value))
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _replication_rows(config, design, search_spec, rep, n):
    """All criterion rows for one (replication, n) cell (shared data)."""
    truth_seed = _seed_tuple(config.seed, config.study, rep, n, _TAG_TRUTH)
    data_seed = _seed_tuple(config.seed, config.study, rep, n, _TAG_DATA)
    try:
        true_spec, truth_edges, retries = design.make_truth(truth_seed)
        moments = sample_data(true_spec, n, data_seed)
    except NetsemError as err:
        return [StudyRow(config.study, rep, n, crit, None, None, False,
                         len(design.truth_edges()), 0, 0, 0.0, repr(err))
                for crit in config.criteria]

    fit_config = ObjectiveConfig()
    rows = []
    if design.kind == "stepwise":
        cache = {}
        for criterion in config.criteria:
            start = time.perf_counter()
            try:
                trace = stepwise_search(
                    search_spec, moments,
                    SearchConfig(target=design.target, criterion=criterion,
                                 gamma=config.gamma, initial=design.initial,
                                 max_steps=config.max_steps),
                    fit_config=fit_config, cache=cache)
                est = trace.final_edges
                converged = _usable(trace.final_fit)
                error = None
            except NetsemError as err:
                est, converged, error = frozenset(), False, repr(err)
            sens, spec_ = score_network(est, truth_edges, design.n_network_nodes)
            rows.append(StudyRow(config.study, rep, n, criterion, sens, spec_,
                                 converged, len(truth_edges), len(est), retries,
                                 time.perf_counter() - start, error))
    else:
        start = time.perf_counter()
        base = LassoPathConfig(target=design.target, gamma=config.gamma)
        try:
            path = lasso_path(search_spec, moments, base, fit_config)
            path_error = None
        except NetsemError as err:
            path, path_error = None, repr(err)
        path_time = time.perf_counter() - start
        for criterion in config.criteria:
            start = time.perf_counter()
            if path is None:
                est, converged, error = frozenset(), False, path_error
            else:
                try:
                    result = lasso_search(
                        search_spec, moments,
                        LassoPathConfig(target=design.target, criterion=criterion,
                                        gamma=config.gamma),
                        fit_config=fit_config, path=path)
                    est = result.selected
                    converged = _usable(result.refit)
                    error = None
                except NetsemError as err:
                    est, converged, error = frozenset(), False, repr(err)
            sens, spec_ = score_network(est, truth_edges, design.n_network_nodes)
            rows.append(StudyRow(config.study, rep, n, criterion, sens, spec_,
                                 converged, len(truth_edges), len(est), retries,
                                 path_time + time.perf_counter() - start, error))
            path_time = 0.0
    return rows


def run_study(config):
    """Run one simulation study; never aborts on per-replication failures.

    Replications are independent with derived seeds, so serial and
    parallel execution give identical results.
    """
    design = study_design(config.study)
    search_spec = design.make_search_spec()
    reps = config.replications
    tasks = [(rep, n) for rep in range(reps) for n in config.n_grid]
    if config.n_jobs > 1:
        from joblib import Parallel, delayed
        chunks = Parallel(n_jobs=config.n_jobs)(
            delayed(_replication_rows)(config, design, search_spec, rep, n)
            for rep, n in tasks)
    else:
        chunks = [_replication_rows(config, design, search_spec, rep, n)
                  for rep, n in tasks]
    result = StudyResult(study=config.study, seed=config.seed,
                         n_grid=config.n_grid, criteria=config.criteria,
                         replications=reps)
    for chunk in chunks:
        result.rows.extend(chunk)
    return result
