"""Parameter-space definition, prior sampling and ensemble covariance estimation.

Conventions: parameter ensembles are (N_m, N_e) matrices, predicted-data
batches are (N_d, N_e); one column per ensemble member throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import psd_factor
from .seeding import member_seeds, rng_from

__all__ = [
    "ParameterSpace",
    "Ensemble",
    "DataBatch",
    "ObservationSet",
    "sample_prior",
    "estimate_cross_cov",
    "estimate_auto_cov",
    "correlation_from_cov",
    "back_transform",
]

TRANSFORMS = ("identity", "log")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ParameterSpace:
    """Prior definition for the uncertain model parameters.

    `prior_cov` is the exact auto-covariance the prior is sampled from (the
    quantity the analytic covariance correction relies on). `dummy_mask`
    flags parameters known to have no influence on the predicted data; they
    are ordinary Gaussian coordinates used to measure spurious updates.
    `geometry` optionally holds one (i, j, k) grid coordinate per parameter.
    """

    names: tuple[str, ...]
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    transform: tuple[str, ...] = ()
    dummy_mask: np.ndarray | None = None
    geometry: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.names)
        mean = _readonly(np.asarray(self.prior_mean, dtype=float).reshape(-1))
        cov = _readonly(np.asarray(self.prior_cov, dtype=float))
        if mean.shape != (n,):
            raise ValueError(f"prior_mean has length {mean.shape[0]}, expected {n}")
        if cov.shape != (n, n):
            raise ValueError(f"prior_cov has shape {cov.shape}, expected ({n}, {n})")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
            raise ValueError("prior_cov must be symmetric within 1e-12")
        if np.any(np.diag(cov) < 0.0):
            raise ValueError("prior_cov has negative diagonal entries")
        transform = tuple(self.transform) if self.transform else ("identity",) * n
        if len(transform) != n:
            raise ValueError("transform must list one tag per parameter")
        unknown = set(transform) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transform tags: {sorted(unknown)}")
        if self.dummy_mask is None:
            mask = np.zeros(n, dtype=bool)
        else:
            mask = np.asarray(self.dummy_mask, dtype=bool).reshape(-1)
            if mask.shape != (n,):
                raise ValueError("dummy_mask length must equal the parameter count")
        mask = mask.copy()
        mask.flags.writeable = False
        geometry = self.geometry
        if geometry is not None:
            geometry = _readonly(np.atleast_2d(np.asarray(geometry, dtype=float)))
            if geometry.shape[0] != n:
                raise ValueError("geometry must provide one coordinate per parameter")
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        object.__setattr__(self, "prior_mean", mean)
        object.__setattr__(self, "prior_cov", cov)
        object.__setattr__(self, "transform", transform)
        object.__setattr__(self, "dummy_mask", mask)
        object.__setattr__(self, "geometry", geometry)

    @property
    def n_params(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        d = {
            "names": list(self.names),
            "prior_mean": self.prior_mean.tolist(),
            "prior_cov": self.prior_cov.tolist(),
            "transform": list(self.transform),
            "dummy_mask": self.dummy_mask.astype(int).tolist(),
        }
        if self.geometry is not None:
            d["geometry"] = self.geometry.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        return cls(
            names=tuple(d["names"]),
            prior_mean=np.asarray(d["prior_mean"], dtype=float),
            prior_cov=np.asarray(d["prior_cov"], dtype=float),
            transform=tuple(d["transform"]),
            dummy_mask=np.asarray(d["dummy_mask"], dtype=bool),
            geometry=None if d.get("geometry") is None else np.asarray(d["geometry"]),
        )


def _validate_matrix(matrix: np.ndarray, what: str, min_cols: int = 2) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{what} must be a 2-d matrix, got ndim={m.ndim}")
    if m.shape[1] < min_cols:
        raise ValueError(f"{what} needs at least {min_cols} members, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} contains non-finite entries")
    return m


@dataclass(frozen=True)
class Ensemble:
    """(N_m, N_e) matrix of parameter realizations, one column per member."""

    matrix: np.ndarray
    member_seeds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        m = _readonly(_validate_matrix(self.matrix, "ensemble matrix"))
        seeds = self.member_seeds
        if seeds is None:
            seeds = np.zeros(m.shape[1], dtype=np.uint64)
        seeds = np.asarray(seeds, dtype=np.uint64).copy()
        if seeds.shape != (m.shape[1],):
            raise ValueError("member_seeds must have one entry per member")
        seeds.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "member_seeds", seeds)

    @property
    def n_params(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_members(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class DataBatch:
    """(N_d, N_e) matrix of predicted data, paired column-wise with an Ensemble."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", _readonly(_validate_matrix(self.matrix, "data batch", min_cols=0))
        )

    @property
    def n_data(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_members(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ObservationSet:
    """Observed data with a diagonal error covariance.

    `kind` labels each datum (e.g. "rate", "pressure") and drives the per-kind
    noise fractions; `location` optionally holds a grid coordinate per datum
    (NaN rows mean "no location"); `time_index` is the report-step index.
    """

    d_obs: np.ndarray
    error_variance: np.ndarray
    kind: tuple[str, ...] = ()
    location: np.ndarray | None = None
    time_index: np.ndarray | None = None

    def __post_init__(self):
        d = _readonly(np.asarray(self.d_obs, dtype=float).reshape(-1))
        v = _readonly(np.asarray(self.error_variance, dtype=float).reshape(-1))
        n = d.shape[0]
        if v.shape != (n,):
            raise ValueError("error_variance length must match d_obs")
        if np.any(v <= 0.0):
            raise ValueError("all error variances must be strictly positive")
        kind = tuple(self.kind) if self.kind else ("data",) * n
        if len(kind) != n:
            raise ValueError("kind must label every datum")
        loc = self.location
        if loc is not None:
            loc = _readonly(np.atleast_2d(np.asarray(loc, dtype=float)))
            if loc.shape[0] != n:
                raise ValueError("location must provide one row per datum")
        ti = self.time_index
        if ti is None:
            ti = np.zeros(n, dtype=int)
        else:
            ti = np.asarray(ti, dtype=int).reshape(-1)
            if ti.shape != (n,):
                raise ValueError("time_index length must match d_obs")
        ti = ti.copy()
        ti.flags.writeable = False
        object.__setattr__(self, "d_obs", d)
        object.__setattr__(self, "error_variance", v)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "time_index", ti)

    @property
    def n_data(self) -> int:
        return self.d_obs.shape[0]

    def to_dict(self) -> dict:
        d = {
            "d_obs": self.d_obs.tolist(),
            "error_variance": self.error_variance.tolist(),
            "kind": list(self.kind),
            "time_index": self.time_index.tolist(),
        }
        if self.location is not None:
            d["location"] = [
                [None if np.isnan(x) else x for x in row] for row in self.location
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationSet":
        loc = d.get("location")
        if loc is not None:
            loc = np.asarray(
                [[np.nan if x is None else x for x in row] for row in loc], dtype=float
            )
        return cls(
            d_obs=np.asarray(d["d_obs"], dtype=float),
            error_variance=np.asarray(d["error_variance"], dtype=float),
            kind=tuple(d["kind"]),
            location=loc,
            time_index=np.asarray(d["time_index"], dtype=int),
        )


def sample_prior(space: ParameterSpace, n: int, seed: int) -> Ensemble:
    """Draw `n` i.i.d. members from N(prior_mean, prior_cov).

    Member j's standard-normal draw comes from a stream derived from
    (seed, j), so the result is bit-identical however members are evaluated.
    The covariance factor uses a symmetric eigendecomposition with negative
    eigenvalues clipped at zero (rejecting matrices indefinite beyond
    -1e-8 * max eigenvalue).
    """
    if n < 2:
        raise ValueError("ensemble size must be at least 2")
    factor = psd_factor(space.prior_cov)
    seeds = member_seeds(seed, n)
    z = np.empty((space.n_params, n))
    for j in range(n):
        z[:, j] = np.random.default_rng(seeds[j]).standard_normal(space.n_params)
    matrix = space.prior_mean[:, None] + factor @ z
    return Ensemble(matrix=matrix, member_seeds=seeds)


def _as_matrix(batch) -> np.ndarray:
    if isinstance(batch, (Ensemble, DataBatch)):
        return batch.matrix
    return np.asarray(batch, dtype=float)


def estimate_cross_cov(params, data) -> np.ndarray:
    """Unbiased ensemble cross-covariance (1/(N-1)) (M - M̄)(D - D̄)ᵀ."""
    m = _as_matrix(params)
    d = _as_matrix(data)
    if m.shape[1] != d.shape[1]:
        raise ValueError("parameter and data ensembles must share the member count")
    n = m.shape[1]
    if n < 2:
        raise ValueError("covariance estimation needs at least 2 members")
    mc = m - m.mean(axis=1, keepdims=True)
    dc = d - d.mean(axis=1, keepdims=True)
    return (mc @ dc.T) / (n - 1)


def estimate_auto_cov(batch) -> np.ndarray:
    """Unbiased ensemble auto-covariance, symmetrized after assembly."""
    cov = estimate_cross_cov(batch, batch)
    cov = 0.5 * (cov + cov.T)
    np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
    return cov


def correlation_from_cov(
    cross: np.ndarray, var_rows: np.ndarray, var_cols: np.ndarray
) -> np.ndarray:
    """Correlations c_ik / sqrt(v_i v_k), clamped to [-1, 1]; 0 where v_i v_k = 0."""
    cross = np.asarray(cross, dtype=float)
    vr = np.asarray(var_rows, dtype=float).reshape(-1)
    vc = np.asarray(var_cols, dtype=float).reshape(-1)
    if cross.shape != (vr.shape[0], vc.shape[0]):
        raise ValueError(
            f"covariance shape {cross.shape} does not match variance lengths "
            f"({vr.shape[0]}, {vc.shape[0]})"
        )
    if np.any(vr < 0.0) or np.any(vc < 0.0):
        raise ValueError("variances must be nonnegative")
    denom = np.sqrt(np.outer(vr, vc))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(denom > 0.0, cross / np.where(denom > 0.0, denom, 1.0), 0.0)
    return np.clip(rho, -1.0, 1.0)


def back_transform(space: ParameterSpace, matrix: np.ndarray) -> np.ndarray:
    """Map assimilation-space values to forward-model inputs (exp on log rows)."""
    out = np.array(matrix, dtype=float, copy=True)
    log_rows = np.array([t == "log" for t in space.transform])
    if log_rows.any():
        out[log_rows] = np.exp(out[log_rows])
    return out
