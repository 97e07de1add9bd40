"""Complex linear algebra over truncated bosonic modes and two-level systems.

All objects are dense and immutable after construction.  A composite Hilbert
space is an ordered tensor product of factors; the convention throughout the
package is qubits first, then cavities, so joint indices read |qubit...; n1, n2⟩.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import expm

from cavitysim.errors import ValidationError

BOSONIC = "bosonic"
QUBIT = "qubit"


@dataclass(frozen=True)
class ModeSpec:
    """A single mode: a truncated bosonic oscillator or a two-level system."""

    kind: str
    dim: int = 2

    def __post_init__(self):
        if self.kind not in (BOSONIC, QUBIT):
            raise ValidationError(f"unknown mode kind {self.kind!r}")
        if self.kind == QUBIT and self.dim != 2:
            raise ValidationError("qubit modes have dim 2")
        if self.dim < 2:
            raise ValidationError("mode dim must be >= 2")

    @staticmethod
    def qubit() -> "ModeSpec":
        return ModeSpec(QUBIT, 2)

    @staticmethod
    def bosonic(dim: int) -> "ModeSpec":
        return ModeSpec(BOSONIC, dim)


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered tensor product of modes.  Factor order is fixed."""

    factors: tuple[ModeSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims)) if self.factors else 1

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def joint_index(self, indices) -> int:
        """Flat index of the basis state with the given per-factor indices."""
        return int(np.ravel_multi_index(tuple(indices), self.dims))

    @staticmethod
    def single(spec: ModeSpec) -> "CompositeSpace":
        return CompositeSpace((spec,))


def _check_same_space(a, b):
    if a.space != b.space:
        raise ValidationError("objects live on different composite spaces")


@dataclass(frozen=True)
class LinearOp:
    """Dense complex operator on a composite space."""

    space: CompositeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValidationError(
                f"matrix shape {m.shape} does not match space dim {self.space.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "LinearOp":
        return LinearOp(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return np.max(np.abs(self.matrix - self.matrix.conj().T)) < tol

    def assert_hermitian(self, tol: float = 1e-12) -> "LinearOp":
        if not self.is_hermitian(tol):
            raise ValidationError("operator is not hermitian within tolerance")
        return self

    def assert_unitary(self, tol: float = 1e-8) -> "LinearOp":
        d = self.matrix.conj().T @ self.matrix - np.eye(self.space.dim)
        if np.max(np.abs(d)) >= tol:
            raise ValidationError("operator is not unitary within tolerance")
        return self

    def __add__(self, other: "LinearOp") -> "LinearOp":
        _check_same_space(self, other)
        return LinearOp(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "LinearOp") -> "LinearOp":
        _check_same_space(self, other)
        return LinearOp(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "LinearOp":
        return LinearOp(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, LinearOp):
            _check_same_space(self, other)
            return LinearOp(self.space, self.matrix @ other.matrix)
        if isinstance(other, Ket):
            _check_same_space(self, other)
            return Ket(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    @staticmethod
    def identity(space: CompositeSpace) -> "LinearOp":
        return LinearOp(space, np.eye(space.dim, dtype=complex))


@dataclass(frozen=True)
class Ket:
    """Pure state on a composite space.  Not automatically normalized."""

    space: CompositeSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (self.space.dim,):
            raise ValidationError(
                f"amplitude length {v.shape[0]} does not match space dim {self.space.dim}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        n = self.norm
        if n == 0:
            raise ValidationError("cannot normalize the zero vector")
        return Ket(self.space, self.amplitudes / n)

    def overlap(self, other: "Ket") -> complex:
        _check_same_space(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOp":
        return DensityOp(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def projector(self) -> LinearOp:
        return LinearOp(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOp:
    """Mixed state: hermitian, unit-trace, positive semidefinite matrix."""

    space: CompositeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValidationError("density matrix shape does not match space dim")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def validate(self, trace_tol: float = 1e-9, eig_tol: float = 1e-9) -> "DensityOp":
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-9:
            raise ValidationError("density matrix is not hermitian")
        if abs(np.trace(self.matrix) - 1.0) > trace_tol:
            raise ValidationError("density matrix trace differs from 1")
        if np.min(np.linalg.eigvalsh(self.matrix)) < -eig_tol:
            raise ValidationError("density matrix has a significantly negative eigenvalue")
        return self

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# ---------------------------------------------------------------------------
# Mode operators


def _require_bosonic(spec: ModeSpec):
    if spec.kind != BOSONIC:
        raise ValidationError("operation requires a bosonic mode")


def annihilation(spec: ModeSpec) -> LinearOp:
    """Ladder operator a with ⟨n−1|a|n⟩ = √n on the truncated space."""
    _require_bosonic(spec)
    m = np.diag(np.sqrt(np.arange(1, spec.dim, dtype=float)), k=1)
    return LinearOp(CompositeSpace.single(spec), m.astype(complex))


def creation(spec: ModeSpec) -> LinearOp:
    return annihilation(spec).dag()


def number_op(spec: ModeSpec) -> LinearOp:
    _require_bosonic(spec)
    return LinearOp(
        CompositeSpace.single(spec), np.diag(np.arange(spec.dim)).astype(complex)
    )


def parity_op(spec: ModeSpec) -> LinearOp:
    """Photon-number parity: diagonal (−1)^n."""
    _require_bosonic(spec)
    return LinearOp(
        CompositeSpace.single(spec),
        np.diag((-1.0) ** np.arange(spec.dim)).astype(complex),
    )


def displacement(alpha: complex, spec: ModeSpec) -> LinearOp:
    """D(α) = exp(α a† − α* a) via exact exponential of the truncated generator.

    Self-consistent with the truncation: D(α)D(−α) deviates from identity only
    through truncation error.
    """
    _require_bosonic(spec)
    if abs(alpha) ** 2 > spec.dim / 4:
        warnings.warn(
            f"displacement amplitude |alpha|^2 = {abs(alpha)**2:.2f} is large for "
            f"truncation dim {spec.dim}; expect truncation artifacts",
            stacklevel=2,
        )
    a = annihilation(spec).matrix
    gen = alpha * a.conj().T - np.conjugate(alpha) * a
    return LinearOp(CompositeSpace.single(spec), expm(gen))


def coherent(alpha: complex, spec: ModeSpec) -> Ket:
    """Coherent state |α⟩, renormalized after truncation."""
    _require_bosonic(spec)
    n = np.arange(spec.dim)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    if alpha == 0:
        amps = np.zeros(spec.dim, dtype=complex)
        amps[0] = 1.0
    else:
        amps = np.exp(
            -0.5 * abs(alpha) ** 2
            + n * np.log(complex(alpha))
            - 0.5 * log_fact
        )
    return Ket(CompositeSpace.single(spec), amps).normalized()


def fock_ket(spec: ModeSpec, n: int) -> Ket:
    if not 0 <= n < spec.dim:
        raise ValidationError(f"Fock level {n} outside truncation 0..{spec.dim - 1}")
    v = np.zeros(spec.dim, dtype=complex)
    v[n] = 1.0
    return Ket(CompositeSpace.single(spec), v)


def qubit_ket(excited: bool = False) -> Ket:
    v = np.array([0.0, 1.0] if excited else [1.0, 0.0], dtype=complex)
    return Ket(CompositeSpace.single(ModeSpec.qubit()), v)


def sigma_minus() -> LinearOp:
    """|g⟩⟨e| on a two-level mode (ground state is index 0)."""
    m = np.zeros((2, 2), dtype=complex)
    m[0, 1] = 1.0
    return LinearOp(CompositeSpace.single(ModeSpec.qubit()), m)


def sigma_plus() -> LinearOp:
    return sigma_minus().dag()


def sigma_z() -> LinearOp:
    return LinearOp(
        CompositeSpace.single(ModeSpec.qubit()), np.diag([1.0, -1.0]).astype(complex)
    )


def excited_projector() -> LinearOp:
    return LinearOp(
        CompositeSpace.single(ModeSpec.qubit()), np.diag([0.0, 1.0]).astype(complex)
    )


def recommended_dim(alpha_max: float) -> int:
    """Default truncation for peak coherent amplitude: keeps Poisson tail < 1e−8."""
    a = abs(alpha_max)
    return math.ceil(a * a + 6.0 * a + 5.0)


# ---------------------------------------------------------------------------
# Composite-space plumbing


def tensor(items):
    """Kronecker product of operators or kets, in the declared factor order."""
    items = list(items)
    if not items:
        raise ValidationError("tensor of an empty list")
    kinds = {type(x) for x in items}
    if kinds == {LinearOp}:
        space = CompositeSpace(
            tuple(f for x in items for f in x.space.factors)
        )
        m = reduce(np.kron, (x.matrix for x in items))
        return LinearOp(space, m)
    if kinds == {Ket}:
        space = CompositeSpace(
            tuple(f for x in items for f in x.space.factors)
        )
        v = reduce(np.kron, (x.amplitudes for x in items))
        return Ket(space, v)
    if kinds == {DensityOp}:
        space = CompositeSpace(
            tuple(f for x in items for f in x.space.factors)
        )
        m = reduce(np.kron, (x.matrix for x in items))
        return DensityOp(space, m)
    raise ValidationError("tensor requires a homogeneous list of operators or kets")


def embed(op: LinearOp, factor_index: int, space: CompositeSpace) -> LinearOp:
    """Lift a single-factor operator to the composite space (identity elsewhere)."""
    if not 0 <= factor_index < space.n_factors:
        raise ValidationError("factor index out of range")
    target = space.factors[factor_index]
    if op.space.dim != target.dim:
        raise ValidationError(
            f"operator dim {op.space.dim} does not match factor dim {target.dim}"
        )
    parts = [
        op if i == factor_index
        else LinearOp.identity(CompositeSpace.single(f))
        for i, f in enumerate(space.factors)
    ]
    m = reduce(np.kron, (p.matrix for p in parts))
    return LinearOp(space, m)


def expectation(state, op: LinearOp) -> complex:
    """⟨ψ|A|ψ⟩ for kets, Tr(ρA) for density operators."""
    _check_same_space(state, op)
    if isinstance(state, Ket):
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    if isinstance(state, DensityOp):
        return complex(np.trace(state.matrix @ op.matrix))
    raise ValidationError("state must be a Ket or DensityOp")


def partial_trace(rho, keep) -> DensityOp:
    """Reduced density operator over the kept factor indices (order preserved)."""
    if isinstance(rho, Ket):
        rho = rho.density()
    keep = sorted(set(keep))
    n = rho.space.n_factors
    if any(k < 0 or k >= n for k in keep):
        raise ValidationError("invalid factor indices in partial trace")
    dims = rho.space.dims
    t = rho.matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace highest-numbered factors first so lower axis numbers stay valid
    for i in sorted(traced, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    sub = CompositeSpace(tuple(rho.space.factors[k] for k in keep))
    return DensityOp(sub, t.reshape(sub.dim, sub.dim))
