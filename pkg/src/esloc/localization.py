"""Localization matrices: tapering factors in [0, 1] applied to the Kalman
gain by Schur product to suppress sampling-error-induced spurious updates.

Schemes
-------
- pseudo-optimal (``po_localization``): r = c² / (c² + (c² + v_i v_k)/N_e),
  with entries zeroed where |c| falls below a correlation threshold.
- correlation-based (``cb_localization``): hard indicator on |rho| > eta, or
  the smooth variant built from the Gaspari-Cohn function.
- distance-based (``distance_localization``): Gaspari-Cohn taper on the
  parameter-to-observation grid distance.
- covariance-matching correction (``cm_correct_covariance``): replaces the
  sampled parameter auto-covariance with the exact prior one before any of
  the taper formulas above are applied.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import ObservationSet, ParameterSpace
from .linalg import floored_inverse_apply, sym_eig

__all__ = [
    "LocalizationMatrix",
    "LocalizationConfig",
    "CovarianceRegularizationWarning",
    "SCHEMES",
    "gaspari_cohn",
    "po_localization",
    "cb_localization",
    "distance_localization",
    "cm_correct_covariance",
    "apply_localization",
    "combine_localizations",
    "write_localization_map",
]

SCHEMES = (
    "none",
    "distance",
    "po",
    "cb_hard",
    "cb_soft",
    "cm",
    "ml",
    "combined_ml_cm",
)

SCHEDULES = ("prior", "all", "each")


class CovarianceRegularizationWarning(UserWarning):
    """Raised (as a warning) when a singular C̃_mm had to be regularized."""


@dataclass(frozen=True)
class LocalizationMatrix:
    """(N_m, N_d) taper with every entry in [0, 1]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("localization matrix must be 2-d")
        if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
            raise ValueError("localization entries must lie in [0, 1]")
        m = np.clip(m, 0.0, 1.0)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class LocalizationConfig:
    """Scheme selection for a data-assimilation run.

    eta is the zeroing threshold (default 1e-3); correlation_length (grid
    cells) only applies to the distance scheme; schedule picks the training
    set for ensemble-based schemes: "prior" computes the taper once from the
    prior runs, "all" refits each iteration on every simulation so far,
    "each" refits on the current iteration's simulations only.
    """

    scheme: str = "none"
    eta: float = 1e-3
    correlation_length: float = 10.0
    schedule: str = "prior"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.eta < 0.0:
            raise ValueError("eta must be nonnegative")
        if self.scheme == "distance" and self.correlation_length <= 0.0:
            raise ValueError("correlation_length must be positive for the distance scheme")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")


def gaspari_cohn(z) -> np.ndarray | float:
    """Compactly supported fifth-order piecewise rational taper.

    z is distance over half-support; the function is 1 at z=0, continuous,
    and identically 0 for z >= 2.
    """
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("gaspari_cohn requires nonnegative arguments")
    out = np.zeros_like(arr)
    near = arr <= 1.0
    zn = arr[near]
    out[near] = ((((-0.25 * zn + 0.5) * zn + 0.625) * zn - 5.0 / 3.0) * zn**2) + 1.0
    mid = (arr > 1.0) & (arr < 2.0)
    zm = arr[mid]
    out[mid] = (
        ((((zm / 12.0 - 0.5) * zm + 0.625) * zm + 5.0 / 3.0) * zm - 5.0) * zm
        + 4.0
        - 2.0 / (3.0 * zm)
    )
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def po_localization(
    cross_cov: np.ndarray,
    var_m: np.ndarray,
    var_d: np.ndarray,
    ensemble_size: int,
    eta: float = 1e-3,
) -> LocalizationMatrix:
    """Pseudo-optimal taper r = c²/(c² + (c² + v_i v_k)/N_e).

    Entries with |c| < eta * sqrt(v_i v_k) are zeroed. `ensemble_size` is the
    size of the ensemble whose covariance estimate will be tapered, which
    stays N_e even when `cross_cov` itself comes from a larger
    surrogate-generated ensemble.
    """
    if ensemble_size < 2:
        raise ValueError("ensemble_size must be at least 2")
    c = np.asarray(cross_cov, dtype=float)
    vm = np.asarray(var_m, dtype=float).reshape(-1)
    vd = np.asarray(var_d, dtype=float).reshape(-1)
    if np.any(vm < 0.0) or np.any(vd < 0.0):
        raise ValueError("variances must be nonnegative")
    if c.shape != (vm.shape[0], vd.shape[0]):
        raise ValueError("cross covariance shape does not match variance lengths")
    c2 = c * c
    vprod = np.outer(vm, vd)
    denom = c2 + (c2 + vprod) / ensemble_size
    with np.errstate(invalid="ignore"):
        r = np.where(denom > 0.0, c2 / np.where(denom > 0.0, denom, 1.0), 0.0)
    r[np.abs(c) < eta * np.sqrt(vprod)] = 0.0
    return LocalizationMatrix(r)


def cb_localization(
    correlations: np.ndarray, eta: float, mode: str = "soft"
) -> LocalizationMatrix:
    """Correlation-based taper.

    hard: indicator of |rho| > eta. soft: q((1 - |rho|)/(1 - eta)) with
    q(z) = gaspari_cohn(2 z), so q(0) = 1 and |rho| <= eta is fully
    suppressed.
    """
    rho = np.asarray(correlations, dtype=float)
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ValueError("correlations must lie in [-1, 1]")
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must satisfy 0 <= eta < 1")
    a = np.abs(np.clip(rho, -1.0, 1.0))
    if mode == "hard":
        r = (a > eta).astype(float)
    elif mode == "soft":
        r = gaspari_cohn(2.0 * (1.0 - a) / (1.0 - eta))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'hard' or 'soft'")
    return LocalizationMatrix(r)


def distance_localization(
    space: ParameterSpace, obs: ObservationSet, correlation_length: float
) -> LocalizationMatrix:
    """Gaspari-Cohn taper on parameter-to-observation grid distance.

    Data without a location (NaN rows) are left untapered (r = 1).
    """
    if space.geometry is None:
        raise ValueError("distance localization requires parameter geometry")
    if obs.location is None:
        raise ValueError("distance localization requires observation locations")
    if correlation_length <= 0.0:
        raise ValueError("correlation_length must be positive")
    pg = space.geometry
    og = obs.location
    if pg.shape[1] != og.shape[1]:
        raise ValueError("parameter and observation coordinates must share dimensionality")
    diff = pg[:, None, :] - og[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    r = gaspari_cohn(np.where(np.isfinite(dist), dist, 0.0) / correlation_length)
    r[:, np.any(np.isnan(og), axis=1)] = 1.0
    return LocalizationMatrix(r)


def cm_correct_covariance(
    true_cmm: np.ndarray, est_cmm: np.ndarray, est_cmd: np.ndarray
) -> np.ndarray:
    """Covariance correction C_mm (C̃_mm)⁻¹ C̃_md using the known prior C_mm.

    The inverse is a symmetric solve with eigenvalues floored at
    1e-8 * max eigenvalue; when the sampled C̃_mm is singular before
    flooring (N_e <= N_m), a CovarianceRegularizationWarning is issued and
    the regularized result is returned anyway.
    """
    true_cmm = np.asarray(true_cmm, dtype=float)
    est_cmm = np.asarray(est_cmm, dtype=float)
    est_cmd = np.asarray(est_cmd, dtype=float)
    n = true_cmm.shape[0]
    if true_cmm.shape != (n, n) or est_cmm.shape != (n, n) or est_cmd.shape[0] != n:
        raise ValueError("covariance shapes are inconsistent")
    vals, _ = sym_eig(est_cmm)
    scale = max(vals[-1], 1e-300)
    floor = 1e-8 * scale
    if vals[0] <= floor:
        warnings.warn(
            "sampled parameter auto-covariance is singular; applying an "
            f"eigenvalue floor of {floor:.3e}",
            CovarianceRegularizationWarning,
            stacklevel=2,
        )
    return true_cmm @ floored_inverse_apply(est_cmm, est_cmd, floor)


def apply_localization(loc: LocalizationMatrix, gain: np.ndarray) -> np.ndarray:
    """Schur (elementwise) product of the taper and the gain."""
    gain = np.asarray(gain, dtype=float)
    if loc.matrix.shape != gain.shape:
        raise ValueError(
            f"localization shape {loc.matrix.shape} does not match gain shape {gain.shape}"
        )
    return loc.matrix * gain


def combine_localizations(a: LocalizationMatrix, b: LocalizationMatrix) -> LocalizationMatrix:
    """Elementwise product of two tapers (stays in [0, 1])."""
    if a.matrix.shape != b.matrix.shape:
        raise ValueError("localization matrices must share a shape")
    return LocalizationMatrix(a.matrix * b.matrix)


def write_localization_map(
    path: str | Path,
    loc: LocalizationMatrix,
    space: ParameterSpace,
    datum_index: int | None = None,
) -> Path:
    """Write a per-datum grid map CSV (cell i, j, k, r) for map figures.

    With datum_index=None every data column is written (an extra `datum`
    column identifies them).
    """
    if space.geometry is None:
        raise ValueError("grid-map export requires parameter geometry")
    geom = space.geometry
    coords = np.zeros((geom.shape[0], 3))
    coords[:, : geom.shape[1]] = geom
    path = Path(path)
    data_cols = range(loc.shape[1]) if datum_index is None else [datum_index]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["datum", "cell_i", "cell_j", "cell_k", "r"])
        for k in data_cols:
            col = loc.matrix[:, k]
            for p in range(coords.shape[0]):
                writer.writerow(
                    [k, coords[p, 0], coords[p, 1], coords[p, 2], repr(float(col[p]))]
                )
    return path
