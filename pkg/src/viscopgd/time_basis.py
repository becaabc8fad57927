"""Temporal discretizations: single-scale grid and PU multi-scale basis.

The multi-scale basis enriches a coarse hat-function mesh over [0, T]
(macro scale, spacing Delta_T) with one shared micro coefficient vector per
submode, living on a local coordinate tau = t - t_i over the full hat
support [-Delta_T, +Delta_T].  Because the hats form a partition of unity,
the product expansion

    sum_k sum_i N_i(t) * q_i^k * g^k(t - t_i)

is continuous across macro nodes even though g^k is shared and local.
A function may additionally carry a transient segment: stored fine-grid
samples on [0, T_c) that replace the expansion there (boxcar splice,
closed at the left end of each window).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError, ShapeMismatchError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class SingleScaleGrid:
    """Uniform time grid with n_t nodes over [0, horizon]."""

    horizon: float
    n_t: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon}")
        if self.n_t < 2:
            raise InvalidParameterError(f"n_t must be >= 2, got {self.n_t}")

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_t - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_t)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_t, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class MultiScaleBasis:
    """Macro hats over [0, T] plus a shared micro grid on [-Delta_T, Delta_T]."""

    horizon: float
    n_macro: int
    n_micro: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon}")
        if self.n_macro < 2 or self.n_micro < 2:
            raise InvalidParameterError("n_macro and n_micro must both be >= 2")

    @property
    def delta_t(self) -> float:
        """Macro element length Delta_T."""
        return self.horizon / (self.n_macro - 1)

    @property
    def macro_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_macro)

    @property
    def micro_nodes(self) -> np.ndarray:
        return np.linspace(-self.delta_t, self.delta_t, self.n_micro)

    @property
    def micro_spacing(self) -> float:
        return 2.0 * self.delta_t / (self.n_micro - 1)

    def _check_domain(self, t: np.ndarray):
        slack = _REL_TOL * self.horizon
        if np.any(t < -slack) or np.any(t > self.horizon + slack):
            raise DomainError(f"time outside [0, {self.horizon}]")

    def macro_weights(self, t: np.ndarray):
        """For each t: containing element e and hat values of nodes e, e+1."""
        scaled = t / self.delta_t
        e = np.clip(np.floor(scaled).astype(int), 0, self.n_macro - 2)
        xi = scaled - e
        return e, 1.0 - xi, xi

    def micro_index(self, tau: np.ndarray):
        """Micro element index and local fraction for offsets tau."""
        pos = (tau + self.delta_t) / self.micro_spacing
        idx = np.clip(np.floor(pos).astype(int), 0, self.n_micro - 2)
        return idx, pos - idx

    def micro_interp(self, g: np.ndarray, tau: np.ndarray) -> np.ndarray:
        idx, frac = self.micro_index(tau)
        return (1.0 - frac) * g[idx] + frac * g[idx + 1]

    def micro_slope(self, g: np.ndarray, tau: np.ndarray) -> np.ndarray:
        idx, _ = self.micro_index(tau)
        return (g[idx + 1] - g[idx]) / self.micro_spacing


def dof_count(basis: MultiScaleBasis, m_s: int) -> tuple[int, int, int]:
    """(macro DOFs, micro DOFs, total) carried by m_s submodes."""
    if m_s < 1:
        raise InvalidParameterError(f"m_s must be >= 1, got {m_s}")
    macro = basis.n_macro * m_s
    micro = basis.n_micro * m_s
    return macro, micro, macro + micro


@dataclass(frozen=True)
class TransientSegment:
    """Fine-resolution samples covering [0, t_end], uniformly spaced."""

    t_end: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.t_end > 0.0:
            raise InvalidParameterError(f"t_end must be positive, got {self.t_end}")
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidParameterError("transient needs at least two samples")

    @property
    def step(self) -> float:
        return self.t_end / (self.samples.size - 1)

    def interp(self, t: np.ndarray) -> np.ndarray:
        pos = t / self.step
        idx = np.clip(np.floor(pos).astype(int), 0, self.samples.size - 2)
        frac = pos - idx
        return (1.0 - frac) * self.samples[idx] + frac * self.samples[idx + 1]

    def slope(self, t: np.ndarray) -> np.ndarray:
        pos = t / self.step
        idx = np.clip(np.floor(pos).astype(int), 0, self.samples.size - 2)
        return (self.samples[idx + 1] - self.samples[idx]) / self.step


@dataclass(frozen=True)
class MultiScaleFunction:
    """Sum of macro x micro submodes, optionally spliced with a transient.

    Each submode is a pair (q, g): q holds n_macro hat coefficients, g holds
    n_micro coefficients of the shared micro function, normalized to unit
    Euclidean norm (the scale lives in q).
    """

    basis: MultiScaleBasis
    submodes: tuple[tuple[np.ndarray, np.ndarray], ...] = ()
    transient: Optional[TransientSegment] = None

    def __post_init__(self):
        frozen = []
        for k, (q, g) in enumerate(self.submodes):
            q = np.asarray(q, dtype=float).copy()
            g = np.asarray(g, dtype=float).copy()
            if q.shape != (self.basis.n_macro,):
                raise ShapeMismatchError(f"submode {k}: macro coefficients must have length {self.basis.n_macro}")
            if g.shape != (self.basis.n_micro,):
                raise ShapeMismatchError(f"submode {k}: micro coefficients must have length {self.basis.n_micro}")
            norm = float(np.linalg.norm(g))
            if abs(norm - 1.0) > 1e-8:
                raise InvalidParameterError(
                    f"submode {k}: micro coefficients must have unit norm (got {norm}); "
                    "use MultiScaleFunction.from_submodes to normalize"
                )
            q.setflags(write=False)
            g.setflags(write=False)
            frozen.append((q, g))
        object.__setattr__(self, "submodes", tuple(frozen))
        if self.transient is not None:
            ratio = self.transient.t_end / self.basis.delta_t
            if abs(ratio - round(ratio)) > _REL_TOL * max(1.0, ratio):
                raise InvalidParameterError("transient length must be a whole number of macro elements")
            if self.transient.t_end > self.basis.horizon * (1.0 + _REL_TOL):
                raise InvalidParameterError("transient cannot extend past the horizon")

    @classmethod
    def from_submodes(
        cls,
        basis: MultiScaleBasis,
        submodes: Sequence[tuple[np.ndarray, np.ndarray]],
        transient: Optional[TransientSegment] = None,
    ) -> "MultiScaleFunction":
        """Build a function, normalizing each micro vector into its macro scale."""
        normalized = []
        for q, g in submodes:
            q = np.asarray(q, dtype=float)
            g = np.asarray(g, dtype=float)
            norm = float(np.linalg.norm(g))
            if norm == 0.0:
                raise InvalidParameterError("micro coefficient vector must be nonzero")
            normalized.append((q * norm, g / norm))
        return cls(basis=basis, submodes=tuple(normalized), transient=transient)

    @property
    def n_submodes(self) -> int:
        return len(self.submodes)

    @property
    def t_splice(self) -> float:
        return self.transient.t_end if self.transient is not None else 0.0

    def _ms_values(self, t: np.ndarray) -> np.ndarray:
        basis = self.basis
        e, w_lo, w_hi = basis.macro_weights(t)
        tau_lo = t - basis.macro_nodes[e]
        tau_hi = t - basis.macro_nodes[e + 1]
        out = np.zeros_like(t)
        for q, g in self.submodes:
            out += w_lo * q[e] * basis.micro_interp(g, tau_lo)
            out += w_hi * q[e + 1] * basis.micro_interp(g, tau_hi)
        return out

    def _ms_derivative(self, t: np.ndarray) -> np.ndarray:
        basis = self.basis
        e, w_lo, w_hi = basis.macro_weights(t)
        tau_lo = t - basis.macro_nodes[e]
        tau_hi = t - basis.macro_nodes[e + 1]
        inv = 1.0 / basis.delta_t
        out = np.zeros_like(t)
        for q, g in self.submodes:
            g_lo = basis.micro_interp(g, tau_lo)
            g_hi = basis.micro_interp(g, tau_hi)
            s_lo = basis.micro_slope(g, tau_lo)
            s_hi = basis.micro_slope(g, tau_hi)
            # Product rule: N'_i q_i G + N_i q_i G', with dtau/dt = 1.
            out += q[e] * (-inv * g_lo + w_lo * s_lo)
            out += q[e + 1] * (inv * g_hi + w_hi * s_hi)
        return out

    def evaluate(self, t) -> np.ndarray:
        """Values at times t (scalar or array); transient wins for t < T_c."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        self.basis._check_domain(t_arr)
        out = self._ms_values(t_arr)
        if self.transient is not None:
            mask = t_arr < self.transient.t_end
            if np.any(mask):
                out[mask] = self.transient.interp(t_arr[mask])
        return out if np.ndim(t) else float(out[0])

    __call__ = evaluate

    def derivative(self, t) -> np.ndarray:
        """Time derivative at t; piecewise slopes inside the transient."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        self.basis._check_domain(t_arr)
        out = self._ms_derivative(t_arr)
        if self.transient is not None:
            mask = t_arr < self.transient.t_end
            if np.any(mask):
                out[mask] = self.transient.slope(t_arr[mask])
        return out if np.ndim(t) else float(out[0])

    def sample(self, grid: SingleScaleGrid) -> np.ndarray:
        """Values at all grid nodes; the grid must span the basis horizon."""
        if abs(grid.horizon - self.basis.horizon) > _REL_TOL * self.basis.horizon:
            raise DomainError(
                f"grid horizon {grid.horizon} does not match basis horizon {self.basis.horizon}"
            )
        return self.evaluate(grid.nodes)

    def to_dict(self) -> dict:
        return {
            "horizon": self.basis.horizon,
            "n_macro": self.basis.n_macro,
            "n_micro": self.basis.n_micro,
            "submodes": [
                {"macro": q.tolist(), "micro": g.tolist()} for q, g in self.submodes
            ],
            "transient": (
                None
                if self.transient is None
                else {"t_end": self.transient.t_end, "samples": self.transient.samples.tolist()}
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiScaleFunction":
        basis = MultiScaleBasis(
            horizon=float(data["horizon"]),
            n_macro=int(data["n_macro"]),
            n_micro=int(data["n_micro"]),
        )
        submodes = tuple(
            (np.asarray(sm["macro"], dtype=float), np.asarray(sm["micro"], dtype=float))
            for sm in data["submodes"]
        )
        transient = None
        if data.get("transient") is not None:
            transient = TransientSegment(
                t_end=float(data["transient"]["t_end"]),
                samples=np.asarray(data["transient"]["samples"], dtype=float),
            )
        return cls(basis=basis, submodes=submodes, transient=transient)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "MultiScaleFunction":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
