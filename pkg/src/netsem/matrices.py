"""Free/fixed matrix patterns.

A ``MatrixSpec`` describes one model matrix: which entries are fixed (and
to what value), which are free (and where they start), and what symmetry
the matrix carries.  Symmetric free entries share a single parameter, so
symmetry holds by construction rather than by constraint.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel

SYMMETRY_KINDS = ("none", "symmetric", "symmetric_zero_diagonal", "diagonal")

#: tolerance for symmetry checks on stored values
SYMMETRY_TOL = 1e-12


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class MatrixSpec:
    """Pattern of one model matrix.

    Parameters
    ----------
    free : ndarray of bool, shape (rows, cols)
        True where the entry is a free parameter.
    values : ndarray of float, shape (rows, cols)
        Starting values for free entries, fixed values elsewhere.
    symmetry : str
        One of ``none``, ``symmetric``, ``symmetric_zero_diagonal``
        (zero fixed diagonal, e.g. a partial-correlation network) or
        ``diagonal`` (off-diagonal fixed to zero).
    labels : ndarray of object, optional
        Optional per-entry labels for free parameters.
    """

    free: np.ndarray
    values: np.ndarray
    symmetry: str = "none"
    labels: np.ndarray = None

    def __post_init__(self):
        free = np.asarray(self.free, dtype=bool)
        values = np.asarray(self.values, dtype=float)
        if free.ndim != 2 or free.shape != values.shape:
            raise InvalidModel("free and values must be 2-d arrays of equal shape")
        labels = self.labels
        if labels is None:
            labels = np.full(free.shape, None, dtype=object)
        else:
            labels = np.asarray(labels, dtype=object)
            if labels.shape != free.shape:
                raise InvalidModel("labels shape must match the matrix shape")
        object.__setattr__(self, "free", _freeze(free.copy()))
        object.__setattr__(self, "values", _freeze(values.copy()))
        object.__setattr__(self, "labels", _freeze(labels.copy()))
        self._validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def fixed(cls, values, symmetry="none"):
        """All entries fixed at the given values."""
        values = np.asarray(values, dtype=float)
        return cls(np.zeros(values.shape, dtype=bool), values, symmetry)

    @classmethod
    def identity(cls, n):
        return cls.fixed(np.eye(n), symmetry="symmetric")

    @classmethod
    def zeros(cls, rows, cols=None, symmetry="none"):
        cols = rows if cols is None else cols
        return cls.fixed(np.zeros((rows, cols)), symmetry=symmetry)

    @classmethod
    def free_dense(cls, rows, cols, start=0.0):
        """Every entry free with a common starting value."""
        return cls(np.ones((rows, cols), dtype=bool),
                   np.full((rows, cols), float(start)))

    @classmethod
    def free_symmetric(cls, n, diag_start=1.0, off_start=0.0):
        """Fully free symmetric matrix (covariance-style)."""
        values = np.full((n, n), float(off_start))
        np.fill_diagonal(values, float(diag_start))
        return cls(np.ones((n, n), dtype=bool), values, "symmetric")

    @classmethod
    def free_network(cls, n, edges=None, start=0.0):
        """Symmetric, zero-diagonal matrix (network weights).

        ``edges=None`` frees every off-diagonal entry; otherwise only the
        listed (i, j) pairs are free.
        """
        free = np.zeros((n, n), dtype=bool)
        if edges is None:
            free = ~np.eye(n, dtype=bool)
        else:
            for i, j in edges:
                if i == j:
                    raise InvalidModel("network edges must be off-diagonal")
                free[i, j] = free[j, i] = True
        values = np.zeros((n, n))
        values[free] = float(start)
        return cls(free, values, "symmetric_zero_diagonal")

    @classmethod
    def free_diagonal(cls, n, start=1.0):
        """Diagonal matrix with free, positive diagonal entries."""
        free = np.eye(n, dtype=bool)
        return cls(free, np.eye(n) * float(start), "diagonal")

    # -- basic queries ---------------------------------------------------------

    @property
    def rows(self):
        return self.free.shape[0]

    @property
    def cols(self):
        return self.free.shape[1]

    @property
    def shape(self):
        return self.free.shape

    def is_square(self):
        return self.rows == self.cols

    def n_free(self):
        """Number of distinct free parameters (symmetric pairs count once)."""
        if self.symmetry == "none":
            return int(self.free.sum())
        upper = np.triu(self.free)
        return int(upper.sum())

    def free_slots(self):
        """Canonical (row, col) pairs of free parameters.

        Symmetric matrices report only the upper triangle (row <= col).
        """
        if self.symmetry == "none":
            rows, cols = np.nonzero(self.free)
        else:
            rows, cols = np.nonzero(np.triu(self.free))
        return list(zip(rows.tolist(), cols.tolist()))

    def with_values(self, values):
        """Copy of this spec with replaced stored values."""
        return MatrixSpec(self.free, values, self.symmetry, self.labels)

    def __eq__(self, other):
        if not isinstance(other, MatrixSpec):
            return NotImplemented
        return (self.symmetry == other.symmetry
                and np.array_equal(self.free, other.free)
                and np.array_equal(self.values, other.values)
                and all(a == b for a, b in zip(self.labels.flat, other.labels.flat)))

    # -- validation ------------------------------------------------------------

    def _validate(self):
        if self.symmetry not in SYMMETRY_KINDS:
            raise InvalidModel(f"unknown symmetry kind: {self.symmetry!r}")
        if self.symmetry == "none":
            return
        if not self.is_square():
            raise InvalidModel(f"{self.symmetry} matrices must be square")
        if not np.array_equal(self.free, self.free.T):
            raise InvalidModel("symmetric pattern requires identical free "
                               "status at (i,j) and (j,i)")
        if np.max(np.abs(self.values - self.values.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidModel("symmetric pattern requires identical values "
                               "at (i,j) and (j,i)")
        diag_free = np.diagonal(self.free)
        diag_vals = np.diagonal(self.values)
        off = ~np.eye(self.rows, dtype=bool)
        if self.symmetry == "symmetric_zero_diagonal":
            if diag_free.any() or np.any(diag_vals != 0.0):
                raise InvalidModel("zero-diagonal matrix must have all "
                                   "diagonal entries fixed at 0")
        if self.symmetry == "diagonal":
            if self.free[off].any() or np.any(self.values[off] != 0.0):
                raise InvalidModel("diagonal matrix must have all "
                                   "off-diagonal entries fixed at 0")
