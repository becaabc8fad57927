"""Physical problem definition for a 1D viscoelastic bar under cyclic load.

The material is linear viscoelastic with internal variables: each dissipative
process j carries a relaxation time tau_j and a weight p_j, relaxes toward
its equilibrium value p_j * E_r * strain, and subtracts from the stress

    sigma = E_v * du/dx - sum_j z_j

so the long-time effective modulus is E_v - E_r * sum_j p_j.

Loads are separable, f(x, t) = f_x(x) * f_t(t) [N/m], plus an optional
constant end traction at Neumann ends.  All types are immutable after
construction and safe to share between solver workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidParameterError

BC_CLAMPED = "clamped"
BC_TRACTION = "traction"

SPATIAL_SHAPES = ("hat", "constant", "table")
TEMPORAL_SHAPES = ("sine", "offset_sine", "table")

_REL_TOL = 1e-12


def _as_readonly(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MaterialParams:
    """Moduli [Pa] and cross-sectional area [m^2] of the bar.

    E_v is the vitreous (instantaneous) modulus, E_r the relaxed modulus
    feeding the internal-variable equilibria.
    """

    E_v: float
    E_r: float
    area: float

    def __post_init__(self):
        if not self.E_v > 0.0:
            raise InvalidParameterError(f"E_v must be positive, got {self.E_v}")
        if self.E_r < 0.0:
            raise InvalidParameterError(f"E_r must be nonnegative, got {self.E_r}")
        if not self.area > 0.0:
            raise InvalidParameterError(f"area must be positive, got {self.area}")


@dataclass(frozen=True)
class RelaxationSpectrum:
    """Relaxation times tau_j [s] and dimensionless weights p_j, sorted by tau."""

    tau: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _as_readonly(self.tau))
        object.__setattr__(self, "weights", _as_readonly(self.weights))
        if self.tau.ndim != 1 or self.tau.shape != self.weights.shape:
            raise InvalidParameterError("tau and weights must be 1D arrays of equal length")
        if self.tau.size < 1:
            raise InvalidParameterError("spectrum needs at least one process")
        if np.any(self.tau <= 0.0):
            raise InvalidParameterError("all relaxation times must be positive")
        # weights >= 0 (not > 0): the purely elastic limit p_j = 0 is a
        # supported configuration.
        if np.any(self.weights < 0.0):
            raise InvalidParameterError("all weights must be nonnegative")
        if np.any(np.diff(self.tau) < 0.0):
            raise InvalidParameterError("relaxation times must be sorted ascending")

    @property
    def n_processes(self) -> int:
        return int(self.tau.size)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


def build_spectrum(
    n_processes: int,
    n_decades: int,
    tau_max: float,
    total_weight: float,
) -> RelaxationSpectrum:
    """Log-spaced spectrum over [tau_max * 10^-n_decades, tau_max].

    Weights follow p_j proportional to sqrt(tau_j), rescaled so they sum to
    ``total_weight``.  A single process sits at tau_max; ``n_decades = 0``
    degenerates all times to tau_max.
    """
    if int(n_processes) != n_processes or n_processes < 1:
        raise InvalidParameterError(f"n_processes must be a positive integer, got {n_processes}")
    if int(n_decades) != n_decades or n_decades < 0:
        raise InvalidParameterError(f"n_decades must be a nonnegative integer, got {n_decades}")
    if not tau_max > 0.0:
        raise InvalidParameterError(f"tau_max must be positive, got {tau_max}")
    if not total_weight > 0.0:
        raise InvalidParameterError(f"total_weight must be positive, got {total_weight}")

    n = int(n_processes)
    if n == 1:
        tau = np.array([float(tau_max)])
    else:
        tau = np.geomspace(tau_max * 10.0 ** (-n_decades), tau_max, n)
    weights = np.sqrt(tau)
    weights *= total_weight / np.sum(weights)
    return RelaxationSpectrum(tau=tau, weights=weights)


def _validate_table(x, y, label: str):
    x = _as_readonly(x)
    y = _as_readonly(y)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise InvalidParameterError(f"{label} table needs two 1D arrays of equal length >= 2")
    if np.any(np.diff(x) <= 0.0):
        raise InvalidParameterError(f"{label} table abscissae must be strictly increasing")
    return x, y


@dataclass(frozen=True)
class LoadDefinition:
    """Separable line load f_x(x) * f_t(t) plus end tractions.

    fx_shape: "hat" (peak fx_amplitude at midspan, zero at the ends),
    "constant", or "table" (linear interpolation of fx_table).
    ft_shape: "sine" (amplitude * sin(2 pi nu t)), "offset_sine"
    (amplitude * (1 - cos(2 pi nu t)) / 2, a zero-start offset cycle),
    or "table".  f_neumann is the constant end force [N] applied at every
    traction end.
    """

    fx_shape: str = "hat"
    fx_amplitude: float = 1.0
    ft_shape: str = "sine"
    ft_frequency: float = 1.0
    ft_amplitude: float = 1.0
    f_neumann: float = 0.0
    fx_table: Optional[tuple[np.ndarray, np.ndarray]] = None
    ft_table: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if self.fx_shape not in SPATIAL_SHAPES:
            raise InvalidParameterError(f"unknown spatial load shape {self.fx_shape!r}")
        if self.ft_shape not in TEMPORAL_SHAPES:
            raise InvalidParameterError(f"unknown temporal load shape {self.ft_shape!r}")
        if self.fx_shape == "table":
            if self.fx_table is None:
                raise InvalidParameterError("fx_shape='table' requires fx_table")
            object.__setattr__(self, "fx_table", _validate_table(*self.fx_table, label="f_x"))
        if self.ft_shape == "table":
            if self.ft_table is None:
                raise InvalidParameterError("ft_shape='table' requires ft_table")
            object.__setattr__(self, "ft_table", _validate_table(*self.ft_table, label="f_t"))
        elif not self.ft_frequency > 0.0:
            raise InvalidParameterError("ft_frequency must be positive")

    def spatial_profile(self, x, length: float):
        """f_x at x (scalar or array) on a bar of the given length [N/m]."""
        x = np.asarray(x, dtype=float)
        if self.fx_shape == "hat":
            half = 0.5 * length
            out = self.fx_amplitude * (1.0 - np.abs(x - half) / half)
            out = np.maximum(out, 0.0)
        elif self.fx_shape == "constant":
            out = np.full_like(x, self.fx_amplitude)
        else:
            xs, ys = self.fx_table
            out = np.interp(x, xs, ys)
        return out if out.ndim else float(out)

    def temporal_factor(self, t):
        """Dimensionless f_t at time t (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if self.ft_shape == "sine":
            out = self.ft_amplitude * np.sin(2.0 * np.pi * self.ft_frequency * t)
        elif self.ft_shape == "offset_sine":
            out = self.ft_amplitude * 0.5 * (1.0 - np.cos(2.0 * np.pi * self.ft_frequency * t))
        else:
            ts, ys = self.ft_table
            out = np.interp(t, ts, ys)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ProblemDefinition:
    """Geometry, material, spectrum, load and boundary conditions.

    The initial displacement is zero everywhere; at least one end must be
    clamped so rigid-body motion is excluded.
    """

    material: MaterialParams
    spectrum: RelaxationSpectrum
    load: LoadDefinition
    length: float
    horizon: float
    bc_left: str = BC_CLAMPED
    bc_right: str = BC_TRACTION

    def __post_init__(self):
        if not self.length > 0.0:
            raise InvalidParameterError(f"length must be positive, got {self.length}")
        if not self.horizon > 0.0:
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon}")
        for name, bc in (("bc_left", self.bc_left), ("bc_right", self.bc_right)):
            if bc not in (BC_CLAMPED, BC_TRACTION):
                raise InvalidParameterError(f"{name} must be 'clamped' or 'traction', got {bc!r}")
        if BC_CLAMPED not in (self.bc_left, self.bc_right):
            raise InvalidParameterError("at least one end must be clamped")
        # Long-time effective modulus must stay positive.
        e_inf = effective_relaxed_modulus(self.material, self.spectrum)
        if not e_inf > 0.0:
            raise InvalidParameterError(
                f"E_v must exceed E_r * sum(p_j); effective relaxed modulus is {e_inf}"
            )
        if self.load.fx_table is not None:
            xs = self.load.fx_table[0]
            if xs[0] > 0.0 or xs[-1] < self.length:
                raise InvalidParameterError("f_x table must cover [0, L]")
        if self.load.ft_table is not None:
            ts = self.load.ft_table[0]
            if ts[0] > 0.0 or ts[-1] < self.horizon:
                raise InvalidParameterError("f_t table must cover [0, T]")

    @property
    def clamped_ends(self) -> tuple[bool, bool]:
        return (self.bc_left == BC_CLAMPED, self.bc_right == BC_CLAMPED)


def evaluate_load(problem: ProblemDefinition, x: float, t: float) -> float:
    """Line load f_x(x) * f_t(t) [N/m]; raises DomainError outside the domain."""
    slack_x = _REL_TOL * problem.length
    slack_t = _REL_TOL * problem.horizon
    if not (-slack_x <= x <= problem.length + slack_x):
        raise DomainError(f"x={x} outside [0, {problem.length}]")
    if not (-slack_t <= t <= problem.horizon + slack_t):
        raise DomainError(f"t={t} outside [0, {problem.horizon}]")
    return float(
        problem.load.spatial_profile(x, problem.length) * problem.load.temporal_factor(t)
    )


def effective_relaxed_modulus(material: MaterialParams, spectrum: RelaxationSpectrum) -> float:
    """Long-time stiffness E_v - E_r * sum(p_j) under sustained load [Pa]."""
    return material.E_v - material.E_r * spectrum.total_weight
