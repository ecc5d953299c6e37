"""Model algebra for Gaussian covariance-structure families.

A ``ModelSpec`` bundles the matrices of the implied-covariance
decomposition

    Sigma = Lambda (I - B)^-1 PsiBlock (I - B)^-T Lambda^T + ThetaBlock

where each of PsiBlock / ThetaBlock is either a plain covariance matrix
or a network block ``Delta (I - Omega)^-1 Delta`` parameterized by
partial correlations (Omega) and scale (Delta).  Specializations:

* plain covariance / pure network model: no latent variables,
  ThetaBlock carries the whole model;
* factor model: B absent (zero);
* latent network model: PsiBlock in network mode;
* residual network model: ThetaBlock in network mode.

Absent matrices are stored as fixed identity/zero specs so that a single
assembly path covers every family.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidModel
from .matrices import MatrixSpec

PSI_PART = {"covariance": ("psi",), "network": ("omega_psi", "delta_psi")}
THETA_PART = {"covariance": ("theta",), "network": ("omega_theta", "delta_theta")}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Declarative model: which matrices exist and their free/fixed patterns.

    ``m == 0`` encodes a model without latent variables; ``lambda_`` is
    then the p x p identity, ``psi`` is fixed to zero and the theta block
    carries the whole model.
    """

    p: int
    m: int
    lambda_: MatrixSpec
    beta: MatrixSpec = None
    psi_mode: str = "covariance"
    psi: MatrixSpec = None
    omega_psi: MatrixSpec = None
    delta_psi: MatrixSpec = None
    theta_mode: str = "covariance"
    theta: MatrixSpec = None
    omega_theta: MatrixSpec = None
    delta_theta: MatrixSpec = None
    var_names: tuple = None
    latent_names: tuple = None

    def __post_init__(self):
        if self.var_names is None:
            object.__setattr__(self, "var_names",
                               tuple(f"y{i + 1}" for i in range(self.p)))
        else:
            object.__setattr__(self, "var_names", tuple(self.var_names))
        if self.latent_names is None:
            object.__setattr__(self, "latent_names",
                               tuple(f"eta{i + 1}" for i in range(self.m)))
        else:
            object.__setattr__(self, "latent_names", tuple(self.latent_names))
        self._validate()

    # -- dimensions ------------------------------------------------------------

    @property
    def m_eff(self):
        """Inner dimension of the latent part (p when m == 0)."""
        return self.m if self.m > 0 else self.p

    # -- matrix access ---------------------------------------------------------

    def matrix_names(self):
        """Names of the matrices present, in canonical order."""
        names = ["lambda"]
        if self.beta is not None:
            names.append("beta")
        names.extend(PSI_PART[self.psi_mode])
        names.extend(THETA_PART[self.theta_mode])
        return tuple(names)

    def matrix(self, name):
        attr = "lambda_" if name == "lambda" else name
        spec = getattr(self, attr)
        if spec is None:
            raise KeyError(name)
        return spec

    def replace_matrix(self, name, new_spec):
        attr = "lambda_" if name == "lambda" else name
        if getattr(self, attr) is None:
            raise KeyError(name)
        return replace(self, **{attr: new_spec})

    def network_target(self, name):
        """The omega MatrixSpec named by a search target."""
        if name not in ("omega_psi", "omega_theta"):
            raise InvalidModel(f"not a network matrix: {name!r}")
        spec = getattr(self, name)
        if spec is None:
            raise InvalidModel(f"model has no {name} (block not in network mode)")
        return spec

    # -- validation ------------------------------------------------------------

    def _validate(self):
        p, me = self.p, self.m_eff
        if self.p < 1 or self.m < 0:
            raise InvalidModel("need p >= 1 and m >= 0")
        if self.lambda_.shape != (p, me):
            raise InvalidModel(f"lambda must be {p} x {me}")
        if self.m == 0:
            if self.lambda_.free.any() or not np.array_equal(self.lambda_.values, np.eye(p)):
                raise InvalidModel("with m == 0, lambda must be the fixed identity")
            if self.beta is not None:
                raise InvalidModel("with m == 0, beta must be absent")
            if self.psi_mode != "covariance" or self.psi.free.any() \
                    or np.any(self.psi.values != 0.0):
                raise InvalidModel("with m == 0, psi must be fixed to zero")
        if self.beta is not None:
            if self.beta.shape != (me, me):
                raise InvalidModel(f"beta must be {me} x {me}")
            if np.diagonal(self.beta.free).any() or np.any(np.diagonal(self.beta.values) != 0.0):
                raise InvalidModel("beta must have a fixed zero diagonal")
        if self.psi_mode not in PSI_PART or self.theta_mode not in THETA_PART:
            raise InvalidModel("modes must be 'covariance' or 'network'")
        for name in PSI_PART[self.psi_mode] + THETA_PART[self.theta_mode]:
            if getattr(self, name) is None:
                raise InvalidModel(f"{name} is required in this mode")
        for name, dim in (("psi", me), ("omega_psi", me), ("delta_psi", me),
                          ("theta", p), ("omega_theta", p), ("delta_theta", p)):
            spec = getattr(self, name)
            if spec is None:
                continue
            if spec.shape != (dim, dim):
                raise InvalidModel(f"{name} must be {dim} x {dim}")
        for name in ("omega_psi", "omega_theta"):
            spec = getattr(self, name)
            if spec is not None and spec.symmetry != "symmetric_zero_diagonal":
                raise InvalidModel(f"{name} must be symmetric with a zero diagonal")
        for name in ("delta_psi", "delta_theta"):
            spec = getattr(self, name)
            if spec is None:
                continue
            if spec.symmetry != "diagonal":
                raise InvalidModel(f"{name} must be diagonal")
            starts = np.diagonal(spec.values)[np.diagonal(spec.free)]
            if np.any(starts <= 0.0):
                raise InvalidModel(f"free {name} entries need positive starts")
        for name in ("psi", "theta"):
            spec = getattr(self, name)
            if spec is None:
                continue
            if spec.symmetry not in ("symmetric", "diagonal"):
                raise InvalidModel(f"{name} must be symmetric or diagonal")
            starts = np.diagonal(spec.values)[np.diagonal(spec.free)]
            if np.any(starts <= 0.0):
                raise InvalidModel(f"free diagonal entries of {name} need positive starts")
        if len(self.var_names) != p:
            raise InvalidModel("need one variable name per observed variable")
        if len(self.latent_names) != self.m:
            raise InvalidModel("need one name per latent variable")


def count_free_parameters(spec):
    """Distinct free parameters K and degrees of freedom P(P+1)/2 - K.

    df may come out negative for an over-identified spec; the spec is
    constructable but flagged by the caller via the sign.
    """
    k = sum(spec.matrix(name).n_free() for name in spec.matrix_names())
    df = spec.p * (spec.p + 1) // 2 - k
    return k, df


# -- family constructors -------------------------------------------------------


def _simple_loadings(p, m, indicators, fix_first):
    """Simple-structure loading pattern; first loading per factor fixed to 1."""
    free = np.zeros((p, m), dtype=bool)
    values = np.zeros((p, m))
    for j, rows in enumerate(indicators):
        for pos, i in enumerate(rows):
            values[i, j] = 1.0
            free[i, j] = not (fix_first and pos == 0)
    return MatrixSpec(free, values)


def _indicator_blocks(p, m, indicators):
    if indicators is None:
        if p % m:
            raise InvalidModel("p not divisible by m; pass explicit indicator lists")
        step = p // m
        indicators = [list(range(j * step, (j + 1) * step)) for j in range(m)]
    return indicators


def ggm_model(p, edges=None, var_names=None):
    """Pure network model: Sigma = Delta (I - Omega)^-1 Delta.

    ``edges=None`` gives the saturated network (every partial correlation
    free), which reproduces the sample matrix exactly when fit.
    """
    return ModelSpec(
        p=p, m=0,
        lambda_=MatrixSpec.identity(p),
        psi_mode="covariance", psi=MatrixSpec.zeros(p, symmetry="symmetric"),
        theta_mode="network",
        omega_theta=MatrixSpec.free_network(p, edges=edges),
        delta_theta=MatrixSpec.free_diagonal(p),
        var_names=var_names,
    )


def covariance_model(p, diagonal_only=False, var_names=None):
    """Unstructured (or diagonal/independence) covariance model."""
    theta = (MatrixSpec.free_diagonal(p) if diagonal_only
             else MatrixSpec.free_symmetric(p))
    return ModelSpec(
        p=p, m=0,
        lambda_=MatrixSpec.identity(p),
        psi_mode="covariance", psi=MatrixSpec.zeros(p, symmetry="symmetric"),
        theta_mode="covariance", theta=theta,
        var_names=var_names,
    )


def cfa_model(p, m, indicators=None, correlated_factors=True,
              fix_first_loading=True, var_names=None, latent_names=None):
    """Confirmatory factor model: Sigma = Lambda Psi Lambda^T + Theta.

    Identification follows the unit-first-loading convention: the first
    indicator of each factor has its loading fixed to 1 and factor
    variances stay free.
    """
    indicators = _indicator_blocks(p, m, indicators)
    psi = MatrixSpec.free_symmetric(m) if correlated_factors else MatrixSpec.free_diagonal(m)
    return ModelSpec(
        p=p, m=m,
        lambda_=_simple_loadings(p, m, indicators, fix_first_loading),
        psi_mode="covariance", psi=psi,
        theta_mode="covariance", theta=MatrixSpec.free_diagonal(p),
        var_names=var_names, latent_names=latent_names,
    )


def sem_model(p, m, beta_edges, indicators=None, fix_first_loading=True,
              var_names=None, latent_names=None):
    """Structural model: directed latent regressions via B.

    ``beta_edges`` lists (to, from) positions freed in B; residual latent
    (co)variances stay in a free diagonal Psi.
    """
    beta_free = np.zeros((m, m), dtype=bool)
    for i, j in beta_edges:
        if i == j:
            raise InvalidModel("beta diagonal must stay zero")
        beta_free[i, j] = True
    spec = cfa_model(p, m, indicators=indicators, correlated_factors=False,
                     fix_first_loading=fix_first_loading,
                     var_names=var_names, latent_names=latent_names)
    return replace(spec, beta=MatrixSpec(beta_free, np.zeros((m, m))))


def lnm_model(p, m, indicators=None, latent_edges=None, fix_first_loading=True,
              var_names=None, latent_names=None):
    """Latent network model: factor model with a GGM on the latent scale.

    ``latent_edges=None`` frees the full latent network (equivalent in fit
    to a saturated latent covariance matrix).
    """
    spec = cfa_model(p, m, indicators=indicators,
                     fix_first_loading=fix_first_loading,
                     var_names=var_names, latent_names=latent_names)
    return replace(
        spec,
        psi_mode="network", psi=None,
        omega_psi=MatrixSpec.free_network(m, edges=latent_edges),
        delta_psi=MatrixSpec.free_diagonal(m),
    )


def rnm_model(p, m, indicators=None, residual_edges=(), beta_edges=None,
              correlated_factors=True, fix_first_loading=True,
              var_names=None, latent_names=None):
    """Residual network model: factor/structural model with a GGM on residuals.

    ``residual_edges`` lists the free residual interactions; the default
    empty network reduces to ordinary local independence.
    """
    if beta_edges:
        spec = sem_model(p, m, beta_edges, indicators=indicators,
                         fix_first_loading=fix_first_loading,
                         var_names=var_names, latent_names=latent_names)
    else:
        spec = cfa_model(p, m, indicators=indicators,
                         correlated_factors=correlated_factors,
                         fix_first_loading=fix_first_loading,
                         var_names=var_names, latent_names=latent_names)
    return replace(
        spec,
        theta_mode="network", theta=None,
        omega_theta=MatrixSpec.free_network(p, edges=residual_edges),
        delta_theta=MatrixSpec.free_diagonal(p),
    )


def set_network_edges(spec, target, edges):
    """Rebuild the target network matrix with exactly the given free edges.

    Fitted values of surviving edges are not carried over; the new edges
    start at zero.  Used by the search procedures.
    """
    old = spec.network_target(target)
    return spec.replace_matrix(target, MatrixSpec.free_network(old.rows, edges=sorted(edges)))
