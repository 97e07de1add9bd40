"""Logical encodings in a single cavity mode and their encode/decode unitaries.

Supported encodings: symmetric cat {|α⟩, |−α⟩}, shifted cat {|2α⟩, |0⟩}, and
the binomial code {(|0⟩+|4⟩)/√2, |2⟩}.  Cat basis states are not exactly
orthogonal; logical amplitudes are interpreted in the symmetrically
orthonormalized (Löwdin) basis so that encoding is a genuine isometry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from cavitysim.errors import ValidationError
from cavitysim.fock import (
    CompositeSpace,
    Ket,
    LinearOp,
    ModeSpec,
    coherent,
    fock_ket,
    recommended_dim,
    tensor,
)


@dataclass(frozen=True)
class Encoding:
    """A pair of logical basis kets in one cavity mode."""

    name: str
    mode: ModeSpec
    ket0: Ket
    ket1: Ket

    def __post_init__(self):
        for k in (self.ket0, self.ket1):
            if abs(k.norm - 1.0) > 1e-10:
                raise ValidationError("logical basis kets must be normalized")
        s = abs(self.overlap)
        if s >= 1.0 - 1e-12:
            raise ValidationError("logical basis states are degenerate")
        if s >= 0.05:
            warnings.warn(
                f"logical basis overlap |s| = {s:.3f} >= 0.05; gate workflows "
                "assume quasiorthogonal basis states",
                stacklevel=2,
            )

    @property
    def overlap(self) -> complex:
        return self.ket0.overlap(self.ket1)

    def orthonormal_basis(self) -> tuple[Ket, Ket]:
        """Löwdin symmetric orthonormalization of (|0⟩_L, |1⟩_L).

        Treats both basis states democratically and reduces to the identity
        when the overlap vanishes.
        """
        v = np.stack([self.ket0.amplitudes, self.ket1.amplitudes])
        gram = v.conj() @ v.T
        w, u = np.linalg.eigh(gram)
        inv_sqrt = (u * (1.0 / np.sqrt(w))) @ u.conj().T
        vt = inv_sqrt @ v
        return (Ket(self.ket0.space, vt[0]), Ket(self.ket1.space, vt[1]))


def cat_encoding(alpha: complex, dim: int, variant: str = "symmetric") -> Encoding:
    """Coherent-state encoding: symmetric {|α⟩, |−α⟩} or shifted {|2α⟩, |0⟩}."""
    peak = 2.0 * abs(alpha)
    if dim < recommended_dim(peak):
        warnings.warn(
            f"dim {dim} below recommended {recommended_dim(peak)} for |alpha| = "
            f"{abs(alpha):.2f}",
            stacklevel=2,
        )
    spec = ModeSpec.bosonic(dim)
    if variant == "symmetric":
        return Encoding("cat", spec, coherent(alpha, spec), coherent(-alpha, spec))
    if variant == "shifted":
        return Encoding(
            "shifted-cat", spec, coherent(2.0 * alpha, spec), fock_ket(spec, 0)
        )
    raise ValidationError(f"unknown cat variant {variant!r}")


def binomial_encoding(dim: int) -> Encoding:
    """Binomial code: |0⟩_L = (|0⟩+|4⟩)/√2, |1⟩_L = |2⟩."""
    if dim < 5:
        raise ValidationError("binomial encoding needs dim >= 5")
    spec = ModeSpec.bosonic(dim)
    k0 = Ket(
        CompositeSpace.single(spec),
        (fock_ket(spec, 0).amplitudes + fock_ket(spec, 4).amplitudes) / np.sqrt(2.0),
    )
    return Encoding("binomial", spec, k0, fock_ket(spec, 2))


def logical_ket(enc: Encoding, c0: complex, c1: complex) -> Ket:
    """Normalized logical state c0|0⟩_L + c1|1⟩_L in the orthonormalized basis."""
    if c0 == 0 and c1 == 0:
        raise ValidationError("logical amplitudes may not both vanish")
    b0, b1 = enc.orthonormal_basis()
    v = c0 * b0.amplitudes + c1 * b1.amplitudes
    return Ket(b0.space, v).normalized()


def qubit_cavity_space(enc: Encoding) -> CompositeSpace:
    return CompositeSpace((ModeSpec.qubit(), enc.mode))


def ideal_encoder(enc: Encoding) -> LinearOp:
    """Unitary on qubit⊗cavity mapping (c0|g⟩+c1|e⟩)|0⟩ → |g⟩(c0|0⟩_L+c1|1⟩_L).

    Only the two-dimensional input subspace is contractually constrained; the
    rest is completed by Gram–Schmidt over the standard basis in lexicographic
    order.
    """
    space = qubit_cavity_space(enc)
    dim = space.dim
    b0, b1 = enc.orthonormal_basis()
    cols = np.zeros((dim, dim), dtype=complex)
    idx_g0 = space.joint_index((0, 0))
    idx_e0 = space.joint_index((1, 0))
    targ0 = np.zeros(dim, dtype=complex)
    targ0[: enc.mode.dim] = b0.amplitudes  # |g⟩ ⊗ basis0
    targ1 = np.zeros(dim, dtype=complex)
    targ1[: enc.mode.dim] = b1.amplitudes
    cols[:, idx_g0] = targ0
    cols[:, idx_e0] = targ1

    fixed = [targ0, targ1]
    free_cols = [i for i in range(dim) if i not in (idx_g0, idx_e0)]
    basis_iter = iter(range(dim))
    for col in free_cols:
        while True:
            e = np.zeros(dim, dtype=complex)
            e[next(basis_iter)] = 1.0
            for _ in range(2):  # reorthogonalize for numerical stability
                for f in fixed:
                    e -= np.vdot(f, e) * f
            n = np.linalg.norm(e)
            if n > 1e-7:
                e /= n
                fixed.append(e)
                cols[:, col] = e
                break
    return LinearOp(space, cols).assert_unitary(1e-9)


def kerr_phase_op(enc: Encoding, K: float, T: float) -> LinearOp:
    """Free self-Kerr evolution e^{+i (K/2) n(n−1) T} on the cavity.

    This is the phase accumulated under the static Hamiltonian term
    −(K/2) a†a†aa over time T.
    """
    n = np.arange(enc.mode.dim)
    return LinearOp(
        CompositeSpace.single(enc.mode),
        np.diag(np.exp(0.5j * K * n * (n - 1) * T)),
    )


def kerr_corrected_decoder(enc: Encoding, K: float, T: float) -> LinearOp:
    """Unitary undoing the encoder after a free Kerr evolution of duration T.

    Maps |g⟩ ⊗ e^{+i(K/2)n(n−1)T}(c0|0⟩_L + c1|1⟩_L) back to (c0|g⟩+c1|e⟩)|0⟩.
    """
    enc_u = ideal_encoder(enc)
    kerr_inv = kerr_phase_op(enc, -K, T)  # inverse of the free evolution
    qubit_id = LinearOp.identity(CompositeSpace.single(ModeSpec.qubit()))
    return enc_u.dag() @ tensor([qubit_id, kerr_inv])
