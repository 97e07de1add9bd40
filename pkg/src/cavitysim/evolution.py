"""Time evolution: exact piecewise-constant propagators and Lindblad integration.

Pure states evolve by exact per-segment matrix exponentials.  Mixed states
evolve by adaptive RK45 on the vectorized Lindblad generator, with
piecewise-constant drives honored at segment boundaries.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from cavitysim.device import DeviceParams, SystemLayout, drive_operator
from cavitysim.errors import NumericalError, ValidationError
from cavitysim.fock import (
    DensityOp,
    Ket,
    LinearOp,
    annihilation,
    number_op,
    sigma_minus,
    sigma_z,
)


@dataclass(frozen=True)
class PulseSequence:
    """Piecewise-constant complex drive amplitudes per control channel.

    channels maps (label, kind) -> complex array; all arrays share one length.
    dt defaults to 1 ns, matching the optimizer discretization.
    """

    dt: float = 1.0
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        lengths = {len(a) for a in self.channels.values()}
        if len(lengths) > 1:
            raise ValidationError("all channels must have the same length")
        frozen = {
            k: np.asarray(v, dtype=complex) for k, v in self.channels.items()
        }
        for v in frozen.values():
            v.setflags(write=False)
        object.__setattr__(self, "channels", frozen)

    @property
    def n_steps(self) -> int:
        for a in self.channels.values():
            return len(a)
        return 0

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    def to_json_dict(self) -> dict:
        return {
            "dt": self.dt,
            "channels": {
                f"{label}:{kind}": {
                    "re": np.real(a).tolist(),
                    "im": np.imag(a).tolist(),
                }
                for (label, kind), a in self.channels.items()
            },
        }

    @staticmethod
    def from_json_dict(d: dict) -> "PulseSequence":
        channels = {}
        for key, arrs in d["channels"].items():
            label, _, kind = key.partition(":")
            channels[(label, kind)] = np.asarray(arrs["re"]) + 1j * np.asarray(
                arrs["im"]
            )
        return PulseSequence(dt=d["dt"], channels=channels)

    def to_csv_rows(self):
        rows = []
        for (label, kind), a in sorted(self.channels.items()):
            for step, u in enumerate(a):
                rows.append((step, f"{label}:{kind}", float(u.real), float(u.imag)))
        return rows

    @staticmethod
    def from_csv_rows(rows, dt: float = 1.0) -> "PulseSequence":
        by_channel = {}
        for step, channel, re, im in rows:
            label, _, kind = channel.partition(":")
            by_channel.setdefault((label, kind), {})[int(step)] = float(re) + 1j * float(im)
        channels = {}
        for key, entries in by_channel.items():
            arr = np.zeros(max(entries) + 1, dtype=complex)
            for step, u in entries.items():
                arr[step] = u
            channels[key] = arr
        return PulseSequence(dt=dt, channels=channels)


@dataclass(frozen=True)
class CollapseSet:
    """Collapse channels as (operator, rate) pairs; L_k = sqrt(rate_k) · op_k."""

    items: tuple

    def __post_init__(self):
        for _, rate in self.items:
            if rate < 0:
                raise ValidationError("collapse rates must be >= 0")
        object.__setattr__(self, "items", tuple(self.items))

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @staticmethod
    def empty() -> "CollapseSet":
        return CollapseSet(())


def segment_propagator(H: LinearOp, dt: float) -> LinearOp:
    """U = exp(−i H dt) for hermitian H, via eigendecomposition."""
    if not H.is_hermitian(1e-10):
        raise ValidationError("segment Hamiltonian must be hermitian")
    w, v = np.linalg.eigh(H.matrix)
    u = (v * np.exp(-1j * w * dt)) @ v.conj().T
    return LinearOp(H.space, u)


def dephasing_rate(T1: float, T2: float) -> float:
    """Pure dephasing rate Γ_φ = 1/T2 − 1/(2 T1)."""
    if T2 > 2.0 * T1 + 1e-9:
        raise ValidationError("T2 may not exceed 2*T1")
    g1 = 0.0 if np.isinf(T1) else 1.0 / (2.0 * T1)
    g2 = 0.0 if np.isinf(T2) else 1.0 / T2
    return max(g2 - g1, 0.0)


def standard_collapses(params: DeviceParams, layout: SystemLayout) -> CollapseSet:
    """Relaxation and dephasing channels for every mode in the layout.

    Qubits: sqrt(1/T1) σ⁻ and sqrt(Γ_φ/2) σ_z, giving coherence decay at
    1/T2 = 1/(2T1) + Γ_φ.  Cavities: sqrt(1/T1) a and sqrt(2 Γ_φ) a†a.
    """
    items = []
    for label in layout.index:
        t1 = params.T1.get(label, np.inf)
        t2 = params.T2.get(label, np.inf)
        gphi = dephasing_rate(t1, t2)
        if layout.is_qubit(label):
            if np.isfinite(t1):
                items.append((layout.lift(sigma_minus(), label), 1.0 / t1))
            if gphi > 0:
                items.append((layout.lift(sigma_z(), label), gphi / 2.0))
        else:
            if np.isfinite(t1):
                items.append(
                    (layout.lift(annihilation(layout.mode(label)), label), 1.0 / t1)
                )
            if gphi > 0:
                items.append(
                    (layout.lift(number_op(layout.mode(label)), label), 2.0 * gphi)
                )
    return CollapseSet(tuple(items))


# ---------------------------------------------------------------------------
# Pure-state pulse evolution


def _segment_hamiltonians(H0: LinearOp, pulse: PulseSequence, layout: SystemLayout):
    ops = {ch: drive_operator(layout, ch).matrix for ch in pulse.channels}
    for k in range(pulse.n_steps):
        h = np.array(H0.matrix)
        for ch, amps in pulse.channels.items():
            u = amps[k]
            if u != 0:
                h += u * ops[ch] + np.conjugate(u) * ops[ch].conj().T
        yield h


def _is_diagonal(m: np.ndarray) -> bool:
    return np.max(np.abs(m - np.diag(np.diag(m)))) < 1e-13


def _single_qubit_fast_path(pulse: PulseSequence, H0: LinearOp) -> str | None:
    """Label of the single driven qubit, if the blockwise 2x2 path applies."""
    labels = {label for (label, kind) in pulse.channels if kind == "qubit"}
    kinds = {kind for (_, kind) in pulse.channels}
    if kinds == {"qubit"} and len(labels) == 1 and _is_diagonal(H0.matrix):
        return labels.pop()
    return None


def _evolve_qubit_blockwise(
    psi: np.ndarray,
    H0_diag: np.ndarray,
    layout: SystemLayout,
    label: str,
    amps: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Exact propagation when H0 is diagonal and only one qubit is driven.

    The Hamiltonian is then block-diagonal in 2x2 g/e blocks, so each segment
    is a closed-form Rabi rotation applied simultaneously to all blocks.
    """
    dims = layout.space.dims
    axis = layout.index[label]
    v = psi.reshape(dims)
    v = np.moveaxis(v, axis, 0).reshape(2, -1).copy()
    d = H0_diag.reshape(dims)
    d = np.moveaxis(d, axis, 0).reshape(2, -1)
    eg, ee = d[0], d[1]
    c = 0.5 * (eg + ee)
    delta = 0.5 * (eg - ee)
    for u in amps:
        half = 0.5 * u
        omega = np.sqrt(delta**2 + np.abs(half) ** 2)
        theta = omega * dt
        sinc = np.where(omega > 0, np.sin(theta) / np.where(omega > 0, omega, 1.0), dt)
        cosf = np.cos(theta)
        phase = np.exp(-1j * c * dt)
        # H_block = c I + [[delta, conj(u)/2], [u/2, -delta]]
        g_new = phase * ((cosf - 1j * sinc * delta) * v[0] - 1j * sinc * np.conjugate(half) * v[1])
        e_new = phase * (-1j * sinc * half * v[0] + (cosf + 1j * sinc * delta) * v[1])
        v[0], v[1] = g_new, e_new
    v = v.reshape([2] + [dims[i] for i in range(len(dims)) if i != axis])
    v = np.moveaxis(v, 0, axis)
    return v.reshape(-1)


def evolve_pulse(
    state: Ket, H0: LinearOp, pulse: PulseSequence, layout: SystemLayout
) -> Ket:
    """Apply the exact piecewise-constant propagator of H0 + drive terms."""
    if state.space != layout.space or H0.space != layout.space:
        raise ValidationError("state, Hamiltonian, and layout spaces must agree")
    for label, kind in pulse.channels:
        if label not in layout.index:
            raise ValidationError(f"channel label {label} not present in layout")
        if (kind == "qubit") != layout.is_qubit(label):
            raise ValidationError(f"channel kind {kind} mismatches mode {label}")
    if pulse.n_steps == 0:
        return state

    fast_label = _single_qubit_fast_path(pulse, H0)
    if fast_label is not None:
        amps = pulse.channels[(fast_label, "qubit")]
        out = _evolve_qubit_blockwise(
            state.amplitudes,
            np.real(np.diag(H0.matrix)),
            layout,
            fast_label,
            amps,
            pulse.dt,
        )
        return Ket(state.space, out)

    psi = np.array(state.amplitudes)
    cache = {}
    keys = _segment_keys(pulse)
    for k, h in zip(keys, _segment_hamiltonians(H0, pulse, layout)):
        u = cache.get(k)
        if u is None:
            w, v = np.linalg.eigh(h)
            u = (v * np.exp(-1j * w * pulse.dt)) @ v.conj().T
            cache[k] = u
        psi = u @ psi
    return Ket(state.space, psi)


def _segment_keys(pulse: PulseSequence):
    chans = sorted(pulse.channels)
    arrs = [pulse.channels[c] for c in chans]
    keys = []
    for k in range(pulse.n_steps):
        keys.append(tuple(complex(np.round(a[k], 14)) for a in arrs))
    return keys


# ---------------------------------------------------------------------------
# Lindblad integration


def lindblad_evolve(
    rho: DensityOp,
    H,
    collapses: CollapseSet,
    T: float | None = None,
    layout: SystemLayout | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: float = np.inf,
) -> DensityOp:
    """Integrate dρ/dt = −i[H,ρ] + Σ (L ρ L† − ½{L†L, ρ}).

    H may be a static LinearOp (with duration T) or a (H0, PulseSequence)
    pair, in which case `layout` is required and the drive is honored as
    piecewise constant at segment boundaries.
    """
    ls = [np.sqrt(rate) * op.matrix for op, rate in collapses]
    lls = [l.conj().T @ l for l in ls]
    dim = rho.space.dim

    def make_rhs(h):
        def rhs(_t, y):
            r = y.reshape(dim, dim)
            dr = -1j * (h @ r - r @ h)
            for l, ll in zip(ls, lls):
                dr += l @ r @ l.conj().T - 0.5 * (ll @ r + r @ ll)
            return dr.reshape(-1)

        return rhs

    def integrate(y, h, t0, t1):
        sol = solve_ivp(
            make_rhs(h),
            (t0, t1),
            y,
            method="RK45",
            rtol=rtol,
            atol=atol,
            max_step=max_step,
        )
        if not sol.success:
            raise NumericalError(f"Lindblad integration failed: {sol.message}")
        return sol.y[:, -1]

    y = rho.matrix.astype(complex).reshape(-1)
    if isinstance(H, LinearOp):
        if T is None:
            raise ValidationError("static Hamiltonian requires a duration T")
        if T > 0:
            y = integrate(y, H.matrix, 0.0, T)
    else:
        H0, pulse = H
        if layout is None:
            raise ValidationError("pulse-driven Lindblad evolution requires a layout")
        t = 0.0
        keys = _segment_keys(pulse)
        seg_iter = zip(keys, _segment_hamiltonians(H0, pulse, layout))
        # merge consecutive identical segments into one solver call
        prev_key, prev_h, span = None, None, 0.0
        for k, h in seg_iter:
            if prev_key is None:
                prev_key, prev_h, span = k, h, pulse.dt
            elif k == prev_key:
                span += pulse.dt
            else:
                y = integrate(y, prev_h, t, t + span)
                t += span
                prev_key, prev_h, span = k, h, pulse.dt
        if prev_key is not None:
            y = integrate(y, prev_h, t, t + span)

    m = y.reshape(dim, dim)
    m = 0.5 * (m + m.conj().T)
    out = DensityOp(rho.space, m)
    tr = abs(np.trace(m) - 1.0)
    if tr > 1e-6:
        warnings.warn(f"Lindblad trace drift {tr:.2e}", stacklevel=2)
    return out
