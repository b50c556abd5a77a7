"""Models exposing tunable-accuracy solvers for the estimator.

Both models honor the same contract: ``draw`` materializes a
realization from its (seed, level, index) identity alone, ``solve``
returns a value certified to the requested tolerance together with the
work charged, and repeated solves of the same (realization, tolerance
index) reproduce the same value bit for bit.  The vectorized hooks
``draw_batch`` / ``solve_batch`` produce exactly the same numbers as
the scalar calls, just for many indices at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .refinement import SampleId
from .streams import derive_key, normal_at, normal_scalar, uniform_at, uniform_scalar

__all__ = [
    "ModelInitError",
    "SyntheticNormalModel",
    "EllipticFlux1D",
    "MODELS",
    "build_model",
    "standard_normal_cdf",
]


class ModelInitError(RuntimeError):
    """Raised when a model cannot be constructed from its parameters."""


def standard_normal_cdf(y: float) -> float:
    """Phi(y) through the C library's erfc; absolute error well under 1e-10."""
    return 0.5 * math.erfc(-y / math.sqrt(2.0))


# stream slots within one (seed, level): slot 0 feeds the realization
# itself (omega, or the coefficient field), slot j+1 feeds the solver
# randomness of tolerance index j.
_REALIZATION_SLOT = 0


def _slot_key(seed: int, level: int, slot: int) -> int:
    return derive_key(seed, level, slot)


# ---------------------------------------------------------------------------
# synthetic scalar model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _SyntheticHandle:
    sid: SampleId
    omega: float


@dataclass
class _SyntheticBatch:
    seed: int
    level: int
    lo: int
    indices: np.ndarray
    omega: np.ndarray


class SyntheticNormalModel:
    """Standard-normal quantity with an explicitly controllable solver.

    The exact quantity is X = omega ~ N(0, 1).  A solve to tolerance h
    returns

        X_h = omega + h * (2 U - 1 + b) / (1 + b),

    where U is uniform on (0, 1), so |X_h - X| <= h always, with a
    slight positive skew controlled by b.  One solve to tolerance h
    costs h**-q work units.  U is keyed to the realization and the
    tolerance index, never re-drawn on recomputation.

    ``uniform_source`` replaces the keyed uniforms for testing; it is
    called as uniform_source(level, index, tol_index).
    """

    name = "synthetic-normal"
    batch_chunk = 1 << 16

    def __init__(
        self,
        q: float = 1.0,
        b: float = 0.1,
        uniform_source: Callable[[int, int, int], float] | None = None,
    ) -> None:
        if q <= 0.0:
            raise ModelInitError(f"work exponent q must be positive, got {q}")
        if not -1.0 < b < 1.0:
            raise ModelInitError(f"skew b must lie in (-1, 1), got {b}")
        self.q = q
        self.b = b
        self.uniform_source = uniform_source

    # -- scalar contract ----------------------------------------------------

    def draw(self, sid: SampleId) -> _SyntheticHandle:
        key = _slot_key(sid.seed, sid.level, _REALIZATION_SLOT)
        return _SyntheticHandle(sid, normal_scalar(key, sid.index))

    def from_omega(self, omega: float, level: int = 0, index: int = 0, seed: int = 0) -> _SyntheticHandle:
        """Handle with a prescribed omega, for hand-traced fixtures."""
        return _SyntheticHandle(SampleId(seed, level, index), omega)

    def solve(self, handle: _SyntheticHandle, tolerance: float, tol_index: int) -> tuple[float, float]:
        sid = handle.sid
        if self.uniform_source is not None:
            u = self.uniform_source(sid.level, sid.index, tol_index)
        else:
            u = uniform_scalar(_slot_key(sid.seed, sid.level, tol_index + 1), sid.index)
        value = handle.omega + tolerance * (2.0 * u - 1.0 + self.b) / (1.0 + self.b)
        return value, self.work_units(tolerance)

    def work_units(self, tolerance: float) -> float:
        if tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, got {tolerance}")
        return tolerance ** -self.q

    def exact_qoi(self, handle: _SyntheticHandle) -> float:
        return handle.omega

    def exact_probability(self, y: float) -> float:
        return standard_normal_cdf(y)

    # -- vectorized contract --------------------------------------------------

    def draw_batch(self, seed: int, level: int, lo: int, hi: int) -> _SyntheticBatch:
        idx = np.arange(lo, hi, dtype=np.uint64)
        omega = normal_at(_slot_key(seed, level, _REALIZATION_SLOT), idx)
        return _SyntheticBatch(seed, level, lo, idx, omega)

    def solve_batch(
        self, batch: _SyntheticBatch, sel: np.ndarray, tolerance: float, tol_index: int
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.uniform_source is not None:
            u = np.array(
                [
                    self.uniform_source(batch.level, int(batch.indices[s]), tol_index)
                    for s in sel
                ],
                dtype=np.float64,
            )
        else:
            key = _slot_key(batch.seed, batch.level, tol_index + 1)
            u = uniform_at(key, batch.indices[sel])
        values = batch.omega[sel] + tolerance * (2.0 * u - 1.0 + self.b) / (1.0 + self.b)
        works = np.full(len(sel), self.work_units(tolerance))
        return values, works

    def exact_batch(self, batch: _SyntheticBatch) -> np.ndarray:
        return batch.omega


# ---------------------------------------------------------------------------
# one-dimensional elliptic flux model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _EllipticHandle:
    sid: SampleId
    fluxes: np.ndarray   # coarse flux per dyadic grid, coarsest first
    errors: np.ndarray   # |flux - exact| per grid
    exact: float


@dataclass
class _EllipticBatch:
    seed: int
    level: int
    lo: int
    indices: np.ndarray
    fluxes: np.ndarray   # (n, grids)
    errors: np.ndarray   # (n, grids)
    exact: np.ndarray    # (n,)


class EllipticFlux1D:
    """Effective flux through a random layered medium on the unit interval.

    The log-conductivity is a stationary Gaussian field with covariance
    sigma**2 * exp(-|x1 - x2| / rho), sampled at the midpoints of a
    fine master grid through a dense Cholesky factor of the covariance
    matrix (factored once per instance; a jitter of 1e-10 * sigma**2 is
    added to the diagonal if rounding spoils positive definiteness).
    Under a unit pressure drop the exact flux is the harmonic mean
    formula X = 1 / sum_i(h / a_i) on the master grid.

    A solve to tolerance t evaluates coarse fluxes on dyadic grids with
    arithmetically averaged coefficients, coarsest first, and returns
    the first one whose true error (against the cached exact flux) is
    within t.  The work charged is that grid's cell count.  The master
    grid reproduces the exact flux bit for bit, so every tolerance is
    reachable.  There is no known closed form for the flux distribution,
    hence no ``exact_probability``.
    """

    name = "elliptic-flux-1d"
    batch_chunk = 2048

    def __init__(
        self,
        sigma: float = 1.0,
        rho: float = 0.1,
        master_cells: int = 4096,
        field_dump_dir: str | Path | None = None,
    ) -> None:
        if sigma < 0.0:
            raise ModelInitError(f"sigma must be >= 0, got {sigma}")
        if rho <= 0.0:
            raise ModelInitError(f"correlation length rho must be positive, got {rho}")
        m = int(master_cells)
        if m < 1 or m & (m - 1):
            raise ModelInitError(f"master_cells must be a power of two, got {master_cells}")
        self.sigma = sigma
        self.rho = rho
        self.master_cells = m
        self.field_dump_dir = Path(field_dump_dir) if field_dump_dir is not None else None
        self._grids = [2 ** g for g in range(m.bit_length())]  # 1, 2, ..., m
        self._chol = self._factor_covariance()

    def _factor_covariance(self) -> np.ndarray:
        m = self.master_cells
        if self.sigma == 0.0:
            return np.zeros((m, m))
        x = (np.arange(m) + 0.5) / m
        cov = self.sigma ** 2 * np.exp(-np.abs(x[:, None] - x[None, :]) / self.rho)
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * self.sigma ** 2
            try:
                return np.linalg.cholesky(cov + jitter * np.eye(m))
            except np.linalg.LinAlgError as exc:
                raise ModelInitError(
                    f"covariance factorization failed even with jitter {jitter}"
                ) from exc

    # -- field and flux machinery -------------------------------------------

    def _field(self, seed: int, level: int, index: int) -> np.ndarray:
        """Coefficient field of one realization (always via the same matvec)."""
        m = self.master_cells
        key = _slot_key(seed, level, _REALIZATION_SLOT)
        base = np.uint64(index) * np.uint64(m)
        z = normal_at(key, base + np.arange(m, dtype=np.uint64))
        a = np.exp(self._chol @ z)
        if self.field_dump_dir is not None:
            self.field_dump_dir.mkdir(parents=True, exist_ok=True)
            out = self.field_dump_dir / f"field_L{level}_i{index}.f64le"
            a.astype("<f8").tofile(out)
        return a

    def _coarse_flux(self, a: np.ndarray, cells: int) -> float:
        """Flux on a ``cells``-cell grid of arithmetically averaged coefficients."""
        a_bar = a.reshape(cells, -1).mean(axis=1)
        resistance = (1.0 / cells) * np.sum(1.0 / a_bar)
        return 1.0 / resistance

    def _profile(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        fluxes = np.array([self._coarse_flux(a, c) for c in self._grids])
        exact = fluxes[-1]  # master grid: averaging is the identity
        errors = np.abs(fluxes - exact)
        return fluxes, errors, float(exact)

    # -- scalar contract ----------------------------------------------------

    def draw(self, sid: SampleId) -> _EllipticHandle:
        a = self._field(sid.seed, sid.level, sid.index)
        fluxes, errors, exact = self._profile(a)
        return _EllipticHandle(sid, fluxes, errors, exact)

    def solve(self, handle: _EllipticHandle, tolerance: float, tol_index: int) -> tuple[float, float]:
        if tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, got {tolerance}")
        pick = int(np.argmax(handle.errors <= tolerance))
        return float(handle.fluxes[pick]), float(self._grids[pick])

    def work_units(self, tolerance: float) -> float:
        # worst-case bound: the master grid always certifies
        return float(self.master_cells)

    def exact_qoi(self, handle: _EllipticHandle) -> float:
        return handle.exact

    # -- vectorized contract --------------------------------------------------

    def draw_batch(self, seed: int, level: int, lo: int, hi: int) -> _EllipticBatch:
        n = hi - lo
        m = self.master_cells
        grids = self._grids
        fluxes = np.empty((n, len(grids)))
        for row, index in enumerate(range(lo, hi)):
            a = self._field(seed, level, index)
            fluxes[row] = [self._coarse_flux(a, c) for c in grids]
        exact = fluxes[:, -1].copy()
        errors = np.abs(fluxes - exact[:, None])
        idx = np.arange(lo, hi, dtype=np.int64)
        return _EllipticBatch(seed, level, lo, idx, fluxes, errors, exact)

    def solve_batch(
        self, batch: _EllipticBatch, sel: np.ndarray, tolerance: float, tol_index: int
    ) -> tuple[np.ndarray, np.ndarray]:
        if tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, got {tolerance}")
        pick = np.argmax(batch.errors[sel] <= tolerance, axis=1)
        values = batch.fluxes[sel, pick]
        works = np.asarray(self._grids, dtype=np.float64)[pick]
        return values, works

    def exact_batch(self, batch: _EllipticBatch) -> np.ndarray:
        return batch.exact


MODELS: dict[str, type] = {
    SyntheticNormalModel.name: SyntheticNormalModel,
    EllipticFlux1D.name: EllipticFlux1D,
}


def build_model(name: str, params: dict | None = None):
    """Instantiate a registered model from its name and parameter map."""
    if name not in MODELS:
        known = ", ".join(sorted(MODELS))
        raise ModelInitError(f"unknown model {name!r}; available: {known}")
    try:
        return MODELS[name](**(params or {}))
    except TypeError as exc:
        raise ModelInitError(f"bad parameters for model {name!r}: {exc}") from exc
