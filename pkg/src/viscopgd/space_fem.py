"""1D linear finite elements: mesh, tridiagonal operators, loads, solves.

Everything here is exact for linear elements on a bar: closed-form
stiffness and mass assembly, 2-point Gauss load integration (exact for the
default piecewise-linear load profiles), and a banded direct solve with
Dirichlet handling by row/column elimination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import MeshError, ShapeMismatchError, SingularSystemError


@dataclass(frozen=True)
class Mesh1D:
    """Sorted node coordinates spanning [0, L]."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("mesh needs at least two nodes")
        if nodes[0] != 0.0:
            raise MeshError(f"first node must sit at 0, got {nodes[0]}")
        if np.any(np.diff(nodes) <= 0.0):
            raise MeshError("nodes must be strictly increasing")

    @property
    def n_x(self) -> int:
        return int(self.nodes.size)

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def element_lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def n_elements(self) -> int:
        return self.n_x - 1

    def midspan_node(self) -> int:
        """Index of the node closest to L/2."""
        return int(np.argmin(np.abs(self.nodes - 0.5 * self.length)))


def uniform_mesh(length: float, n_x: int) -> Mesh1D:
    if n_x < 2:
        raise MeshError(f"n_x must be >= 2, got {n_x}")
    return Mesh1D(np.linspace(0.0, length, n_x))


@dataclass(frozen=True)
class SpatialOperator:
    """Symmetric tridiagonal operator stored as (diagonal, off-diagonal)."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float).copy()
        off = np.asarray(self.off, dtype=float).copy()
        diag.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)
        if off.size != diag.size - 1:
            raise ShapeMismatchError("off-diagonal must be one shorter than diagonal")

    @property
    def size(self) -> int:
        return int(self.diag.size)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.size:
            raise ShapeMismatchError(f"vector of length {v.shape[-1]} vs operator size {self.size}")
        out = self.diag * v
        out[..., :-1] += self.off * v[..., 1:]
        out[..., 1:] += self.off * v[..., :-1]
        return out

    def quad(self, u: np.ndarray, v: np.ndarray) -> float:
        """Bilinear form u^T A v."""
        return float(np.dot(u, self.matvec(v)))

    def to_dense(self) -> np.ndarray:
        out = np.diag(self.diag)
        idx = np.arange(self.size - 1)
        out[idx, idx + 1] = self.off
        out[idx + 1, idx] = self.off
        return out


def assemble_stiffness(mesh: Mesh1D, modulus: float, area: float) -> SpatialOperator:
    """K[a][b] = sum_e int N'_a (modulus * area) N'_b dx."""
    if not modulus > 0.0 or not area > 0.0:
        raise MeshError("modulus and area must be positive")
    k_e = modulus * area / mesh.element_lengths
    diag = np.zeros(mesh.n_x)
    diag[:-1] += k_e
    diag[1:] += k_e
    return SpatialOperator(diag=diag, off=-k_e)


def assemble_mass(mesh: Mesh1D) -> SpatialOperator:
    """Consistent linear-element mass matrix; entries sum to L."""
    h = mesh.element_lengths
    diag = np.zeros(mesh.n_x)
    diag[:-1] += h / 3.0
    diag[1:] += h / 3.0
    return SpatialOperator(diag=diag, off=h / 6.0)


def assemble_load_vector(mesh: Mesh1D, f_x: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Consistent nodal forces from a line load [N/m], 2-point Gauss per element."""
    left = mesh.nodes[:-1]
    h = mesh.element_lengths
    s = 0.5 / np.sqrt(3.0)
    # Gauss points at the element center +/- h/(2 sqrt 3), weights h/2.
    xg1 = left + (0.5 - s) * h
    xg2 = left + (0.5 + s) * h
    f1 = np.asarray(f_x(xg1), dtype=float)
    f2 = np.asarray(f_x(xg2), dtype=float)
    w = 0.5 * h
    out = np.zeros(mesh.n_x)
    # Shape-function values at the two Gauss points.
    n_lo1, n_lo2 = 0.5 + s, 0.5 - s
    out[:-1] += w * (f1 * n_lo1 + f2 * n_lo2)
    out[1:] += w * (f1 * n_lo2 + f2 * n_lo1)
    return out


def strain_of(mesh: Mesh1D, u: np.ndarray) -> np.ndarray:
    """Element-wise du/dx for nodal displacements u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_x,):
        raise ShapeMismatchError(f"expected {mesh.n_x} nodal values, got shape {u.shape}")
    return np.diff(u) / mesh.element_lengths


def gradient_rhs(mesh: Mesh1D, elem_values: np.ndarray, area: float) -> np.ndarray:
    """Nodal vector of int N'_a * (area * field) dx for an element-wise field.

    This is the weak-form footprint of an element-constant stress-like field
    (used for internal-variable coupling terms).
    """
    z = np.asarray(elem_values, dtype=float)
    if z.shape != (mesh.n_elements,):
        raise ShapeMismatchError(f"expected {mesh.n_elements} element values, got shape {z.shape}")
    out = np.zeros(mesh.n_x)
    out[1:] += area * z
    out[:-1] -= area * z
    return out


def solve_constrained(
    op: SpatialOperator, rhs: np.ndarray, clamped: Sequence[int]
) -> np.ndarray:
    """Solve op @ u = rhs with u = 0 at clamped nodes (row/column elimination)."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.size,):
        raise ShapeMismatchError(f"rhs of shape {rhs.shape} vs operator size {op.size}")
    clamped = sorted(set(int(i) for i in clamped))
    if len(clamped) == 0:
        raise SingularSystemError("no clamped node: constrained system is singular")
    free = np.setdiff1d(np.arange(op.size), clamped, assume_unique=True)
    if free.size == 0:
        return np.zeros(op.size)
    # The free block of a tridiagonal matrix stays tridiagonal: consecutive
    # free nodes that were not adjacent originally are uncoupled (zero band).
    diag_f = op.diag[free]
    adjacent = np.diff(free) == 1
    off_f = np.where(adjacent, op.off[free[:-1]], 0.0)
    ab = np.zeros((2, free.size))
    ab[0, 1:] = off_f
    ab[1] = diag_f
    try:
        u_f = scipy.linalg.solveh_banded(ab, rhs[free])
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"constrained system not positive definite: {exc}") from exc
    out = np.zeros(op.size)
    out[free] = u_f
    return out


def clamped_nodes(mesh: Mesh1D, clamp_left: bool, clamp_right: bool) -> list[int]:
    out = []
    if clamp_left:
        out.append(0)
    if clamp_right:
        out.append(mesh.n_x - 1)
    return out
