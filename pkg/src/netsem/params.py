"""Parameter vectors, sample moments, and the implied-covariance kernel.

``ParameterMap`` assigns every distinct free entry of a model one slot in
a flat vector (symmetric pairs share a slot) and precomputes the index
arrays used to scatter the vector into realized matrices and to gather
per-slot gradients back out.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel, NotPositiveDefinite, SingularStructuralMatrix

#: condition-number threshold above which (I - B) / (I - Omega) is singular
COND_LIMIT = 1e12

#: relative eigenvalue tolerance for positive semi-definiteness checks
PSD_SLACK = 1e-8


@dataclass(frozen=True, eq=False)
class SampleMoments:
    """Sample covariance matrix S with its sample size and labels."""

    s: np.ndarray
    n: int
    labels: tuple = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidModel("sample matrix must be square")
        if np.max(np.abs(s - s.T), initial=0.0) > 1e-12:
            raise InvalidModel("sample matrix must be symmetric within 1e-12")
        s = (s + s.T) / 2.0
        eigs = np.linalg.eigvalsh(s)
        if eigs[0] < -PSD_SLACK * max(eigs[-1], 0.0):
            raise NotPositiveDefinite("sample matrix is not positive semi-definite")
        if self.n < 2:
            raise InvalidModel("need a sample size of at least 2")
        labels = self.labels
        if labels is None:
            labels = tuple(f"y{i + 1}" for i in range(s.shape[0]))
        else:
            labels = tuple(labels)
            if len(labels) != s.shape[0]:
                raise InvalidModel("need one label per variable")
        s.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "labels", labels)

    @property
    def p(self):
        return self.s.shape[0]

    def log_det_s(self):
        """log det S via Cholesky; raises if S is singular."""
        try:
            chol = np.linalg.cholesky(self.s)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("sample matrix is singular") from None
        return 2.0 * float(np.sum(np.log(np.diagonal(chol))))


class ParameterMap:
    """Slot assignment for the free parameters of a model.

    Slot order follows the model's canonical matrix order; within a
    matrix, row-major over canonical (upper-triangle) free entries.
    """

    def __init__(self, spec):
        self.spec = spec
        slots = []
        start = []
        positive = []
        self._plan = {}
        for name in spec.matrix_names():
            mspec = spec.matrix(name)
            pairs = mspec.free_slots()
            pos = np.arange(len(slots), len(slots) + len(pairs))
            ri = np.array([i for i, _ in pairs], dtype=int)
            ci = np.array([j for _, j in pairs], dtype=int)
            mult = np.where(ri == ci, 1.0, 2.0) if mspec.symmetry != "none" \
                else np.ones(len(pairs))
            self._plan[name] = (pos, ri, ci, mult, mspec.symmetry != "none")
            for i, j in pairs:
                slots.append((name, i, j))
                start.append(mspec.values[i, j])
                positive.append(self._is_scale_slot(name, i, j))
        self.slots = tuple(slots)
        self.k = len(slots)
        self.start = np.asarray(start, dtype=float)
        self.positive = np.asarray(positive, dtype=bool)

    @staticmethod
    def _is_scale_slot(name, i, j):
        # variances and network scale entries live on the positive half-line
        return i == j and name in ("psi", "theta", "delta_psi", "delta_theta")

    def state(self, values=None):
        values = self.start if values is None else values
        return ParameterState(np.asarray(values, dtype=float), self)

    def materialize(self, values):
        """Realized matrices (dict by name) for a parameter vector."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.k,):
            raise InvalidModel(f"parameter vector must have length {self.k}")
        mats = {}
        for name in self.spec.matrix_names():
            mspec = self.spec.matrix(name)
            pos, ri, ci, _, symmetric = self._plan[name]
            out = mspec.values.copy()
            if len(pos):
                out[ri, ci] = values[pos]
                if symmetric:
                    out[ci, ri] = values[pos]
            mats[name] = out
        return mats

    def readback(self, mats):
        """Inverse of :meth:`materialize`: gather slot values from matrices."""
        values = np.empty(self.k)
        for name in self.spec.matrix_names():
            pos, ri, ci, _, _ = self._plan[name]
            if len(pos):
                values[pos] = mats[name][ri, ci]
        return values

    def gather(self, name, core):
        """Per-slot gradient entries for one matrix from its core array."""
        pos, ri, ci, mult, _ = self._plan[name]
        return pos, mult * core[ri, ci]

    def slot_positions(self, name):
        return self._plan[name][0]

    def labels(self):
        """Display label per slot (declared label or generated)."""
        out = []
        for name, i, j in self.slots:
            declared = self.spec.matrix(name).labels[i, j]
            out.append(declared if declared is not None else f"{name}[{i + 1},{j + 1}]")
        return out


@dataclass(frozen=True, eq=False)
class ParameterState:
    """Flat vector of free parameters plus its slot mapping."""

    values: np.ndarray
    index: ParameterMap

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (self.index.k,):
            raise InvalidModel(f"parameter vector must have length {self.index.k}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def to_matrices(self):
        return self.index.materialize(self.values)

    def with_values(self, values):
        return ParameterState(values, self.index)


# -- implied covariance ----------------------------------------------------------


class Assembly:
    """Intermediate products of one implied-covariance evaluation."""

    __slots__ = ("sigma", "mats", "M", "A", "psi_block", "q_psi",
                 "theta_block", "q_theta")

    def __init__(self, sigma, mats, M, A, psi_block, q_psi, theta_block, q_theta):
        self.sigma = sigma
        self.mats = mats
        self.M = M
        self.A = A
        self.psi_block = psi_block
        self.q_psi = q_psi
        self.theta_block = theta_block
        self.q_theta = q_theta


def _checked_inverse(mat, what):
    if np.linalg.cond(mat) > COND_LIMIT:
        raise SingularStructuralMatrix(f"(I - {what}) is numerically singular")
    return np.linalg.inv(mat)


def _block(mode, mats, omega_name, delta_name, plain_name, what):
    if mode == "covariance":
        return mats[plain_name], None
    omega = mats[omega_name]
    d = np.diagonal(mats[delta_name])
    q = _checked_inverse(np.eye(omega.shape[0]) - omega, what)
    block = d[:, None] * q * d[None, :]
    return block, q


def assemble(spec, pmap, values):
    """Assemble Sigma and its building blocks for a parameter vector."""
    mats = pmap.materialize(values)
    me = spec.m_eff
    lam = mats["lambda"]
    if "beta" in mats:
        A = _checked_inverse(np.eye(me) - mats["beta"], "B")
        M = lam @ A
    else:
        A = np.eye(me)
        M = lam
    psi_block, q_psi = _block(spec.psi_mode, mats, "omega_psi", "delta_psi",
                              "psi", "Omega_psi")
    theta_block, q_theta = _block(spec.theta_mode, mats, "omega_theta",
                                  "delta_theta", "theta", "Omega_theta")
    sigma = M @ psi_block @ M.T + theta_block
    sigma = (sigma + sigma.T) / 2.0
    return Assembly(sigma, mats, M, A, psi_block, q_psi, theta_block, q_theta)


def implied_covariance(spec, params):
    """Model-implied covariance matrix for a parameter state.

    Raises ``SingularStructuralMatrix`` when (I - B) or an (I - Omega)
    factor is numerically singular at this point.
    """
    return assemble(spec, params.index, params.values).sigma


# -- precision/network conversions ------------------------------------------------


def precision_to_network(k):
    """Split a precision matrix into partial correlations and scale.

    Returns ``(omega, delta)`` with ``omega[j, l] = -k[j, l] /
    sqrt(k[j, j] k[l, l])`` off the diagonal and ``delta`` diagonal with
    ``delta[j, j] = k[j, j] ** -0.5``, so that
    ``delta (I - omega)^-1 delta`` reproduces ``inv(k)``.
    """
    k = np.asarray(k, dtype=float)
    d = np.diagonal(k)
    if np.any(d <= 0.0):
        raise NotPositiveDefinite("precision matrix needs a positive diagonal")
    try:
        np.linalg.cholesky((k + k.T) / 2.0)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("precision matrix is not positive definite") from None
    scale = 1.0 / np.sqrt(d)
    omega = -k * scale[:, None] * scale[None, :]
    omega = (omega + omega.T) / 2.0
    np.fill_diagonal(omega, 0.0)
    delta = np.diag(scale)
    return omega, delta


def network_to_partial_correlations(sigma):
    """Partial-correlation matrix of a PD covariance matrix.

    The result is the weight matrix of the saturated network model:
    standardize the negated off-diagonal of ``inv(sigma)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky((sigma + sigma.T) / 2.0)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("covariance matrix is not positive definite") from None
    inv_chol = np.linalg.inv(chol)
    precision = inv_chol.T @ inv_chol
    omega, _ = precision_to_network(precision)
    return omega


def saturated_network_state(spec, moments):
    """Parameter state of a saturated network model evaluated at S.

    Fills the theta-block network slots with the sample partial
    correlations and scale taken from ``inv(S)``; the resulting implied
    covariance equals S (perfect fit).
    """
    if spec.theta_mode != "network" or spec.m != 0:
        raise InvalidModel("expected a pure network model")
    chol = np.linalg.cholesky(moments.s)
    inv_chol = np.linalg.inv(chol)
    precision = inv_chol.T @ inv_chol
    omega, delta = precision_to_network(precision)
    pmap = ParameterMap(spec)
    mats = pmap.materialize(pmap.start)
    mats["omega_theta"] = omega
    mats["delta_theta"] = delta
    return pmap.state(pmap.readback(mats))
