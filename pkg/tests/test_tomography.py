
import numpy as np
import pytest

from cavitysim.errors import ValidationError
from cavitysim.fock import (
    CompositeSpace,
    DensityOp,
    Ket,
    ModeSpec,
    coherent,
    fock_ket,
    qubit_ket,
    tensor,
)
from cavitysim.tomography import (
    TransferMatrix,
    joint_wigner,
    ket_fidelity,
    mle_density,
    pauli_labels,
    pauli_matrix,
    pauli_transfer,
    process_fidelity,
    state_fidelity,
    tomo_probabilities,
    unitary_transfer,
    wigner,
    wigner_grid,
)

TWO_PI = 2.0 / np.pi


def test_wigner_vacuum_and_one_photon():
    spec = ModeSpec.bosonic(10)
    assert abs(wigner(fock_ket(spec, 0), 0.0) - TWO_PI) < 1e-12
    assert abs(wigner(fock_ket(spec, 1), 0.0) + TWO_PI) < 1e-12


def test_wigner_coherent_displaced_peak():
    spec = ModeSpec.bosonic(25)
    psi = coherent(0.7, spec)
    assert abs(wigner(psi, 0.7) - TWO_PI) < 1e-8
    # Gaussian falloff: W(β) = (2/π) e^{−2|β−α|²}
    assert abs(wigner(psi, 0.2) - TWO_PI * np.exp(-2 * 0.25)) < 1e-8


def test_wigner_grid_integral_is_one():
    spec = ModeSpec.bosonic(55)
    psi = coherent(0.5, spec)
    ax = np.arange(-3.5, 3.5 + 1e-9, 0.14)
    grid = wigner_grid(psi, 0, ax + 0.5, ax)
    assert abs(grid.integral() - 1.0) < 0.01


def test_wigner_grid_serialization_roundtrip():
    spec = ModeSpec.bosonic(6)
    ax = np.linspace(-1, 1, 5)
    grid = wigner_grid(fock_ket(spec, 0), 0, ax, ax)
    rows = grid.to_csv_rows()
    assert len(rows) == 25
    d = grid.to_json_dict()
    assert np.allclose(d["values"], grid.values)
    assert max(abs(v) for *_coords, v in rows) <= TWO_PI + 1e-9


def test_wigner_reduced_state_of_composite():
    spec = ModeSpec.bosonic(8)
    psi = tensor([qubit_ket(True), fock_ket(spec, 1)])
    assert abs(wigner(psi, 0.0, factor_index=1) + TWO_PI) < 1e-12


def test_joint_wigner_product_state_factorizes():
    s = ModeSpec.bosonic(12)
    psi = tensor([coherent(0.4, s), fock_ket(s, 1)])
    for b1, b2 in [(0.0, 0.0), (0.3, -0.2j), (0.5 + 0.1j, 0.2)]:
        joint = joint_wigner(psi, b1, b2)
        prod = (
            wigner(tensor([coherent(0.4, s)]), b1)
            * wigner(tensor([fock_ket(s, 1)]), b2)
            / TWO_PI**2
        )
        assert abs(joint - prod) < 1e-9


def test_joint_wigner_vacuum_and_bounds():
    s = ModeSpec.bosonic(6)
    psi = tensor([fock_ket(s, 0), fock_ket(s, 0)])
    assert abs(joint_wigner(psi, 0.0, 0.0) - 1.0) < 1e-12
    assert abs(joint_wigner(psi, 0.0, 0.0, scaled=True) - TWO_PI**2) < 1e-12


def test_joint_wigner_bell_state():
    s = ModeSpec.bosonic(6)
    v01 = tensor([fock_ket(s, 0), fock_ket(s, 1)])
    v10 = tensor([fock_ket(s, 1), fock_ket(s, 0)])
    bell = Ket(v01.space, (v01.amplitudes + v10.amplitudes) / np.sqrt(2))
    # both branches have one photon total: parity product (−1)(+1) → −1... per
    # branch (+1)(−1) and (−1)(+1), so the joint parity at the origin is −1
    assert abs(joint_wigner(bell, 0.0, 0.0) + 1.0) < 1e-12


def _qubit_rho(vec):
    space = CompositeSpace.single(ModeSpec.qubit())
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return DensityOp(space, np.outer(v, v.conj()))


def test_tomo_probabilities_ground_state():
    table = tomo_probabilities(_qubit_rho([1, 0]))
    assert abs(table[("I",)][0] - 1.0) < 1e-12
    assert abs(table[("X90",)][0] - 0.5) < 1e-12
    assert abs(table[("X90",)][1] - 0.5) < 1e-12
    assert abs(table[("X180",)][1] - 1.0) < 1e-12


def test_tomo_probabilities_two_qubit_completeness():
    rng = np.random.default_rng(0)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    v /= np.linalg.norm(v)
    space = CompositeSpace((ModeSpec.qubit(), ModeSpec.qubit()))
    rho = DensityOp(space, np.outer(v, v.conj()))
    table = tomo_probabilities(rho)
    assert len(table) == 16
    for probs in table.values():
        assert len(probs) == 4
        assert abs(np.sum(probs) - 1.0) < 1e-12


def test_tomo_probabilities_rejects_three_qubits():
    space = CompositeSpace(tuple(ModeSpec.qubit() for _ in range(3)))
    rho = DensityOp(space, np.eye(8) / 8)
    with pytest.raises(ValidationError):
        tomo_probabilities(rho)


def test_mle_roundtrip_pure_states():
    rng = np.random.default_rng(17)
    for _ in range(50):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        rho = _qubit_rho(v)
        est = mle_density(tomo_probabilities(rho))
        est.validate(1e-8, 1e-8)
        assert state_fidelity(est, rho) > 0.9999


def test_mle_roundtrip_two_qubit():
    rng = np.random.default_rng(3)
    space = CompositeSpace((ModeSpec.qubit(), ModeSpec.qubit()))
    for _ in range(5):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        rho = DensityOp(space, np.outer(v, v.conj()))
        est = mle_density(tomo_probabilities(rho))
        assert state_fidelity(est, rho) > 0.9999


def test_mle_physical_from_noisy_counts():
    rng = np.random.default_rng(5)
    rho = _qubit_rho([1, 1])
    table = tomo_probabilities(rho)
    noisy = {k: np.abs(v + 0.03 * rng.normal(size=len(v))) for k, v in table.items()}
    noisy = {k: v / np.sum(v) for k, v in noisy.items()}
    est = mle_density(noisy)
    assert abs(np.trace(est.matrix) - 1.0) < 1e-8
    assert np.min(np.linalg.eigvalsh(est.matrix)) > -1e-10


def test_mle_finite_shot_statistics():
    """Median fidelity over random two-qubit states with 10^4 multinomial shots."""
    rng = np.random.default_rng(42)
    space = CompositeSpace((ModeSpec.qubit(), ModeSpec.qubit()))
    fids = []
    for _ in range(6):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        rho = DensityOp(space, np.outer(v, v.conj()))
        table = tomo_probabilities(rho)
        sampled = {
            k: rng.multinomial(10_000, p / np.sum(p)) / 10_000
            for k, p in table.items()
        }
        est = mle_density(sampled, shots=10_000)
        fids.append(state_fidelity(est, rho))
    assert np.median(fids) >= 0.99


def test_mle_invariant_under_setting_reordering():
    rng = np.random.default_rng(8)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    rho = _qubit_rho(v)
    table = tomo_probabilities(rho)
    reordered = dict(reversed(list(table.items())))
    f1 = state_fidelity(mle_density(table), rho)
    f2 = state_fidelity(mle_density(reordered), rho)
    assert abs(f1 - f2) < 1e-6


def test_ptm_identity_process():
    r = unitary_transfer(np.eye(2, dtype=complex), 1)
    assert np.max(np.abs(r.R - np.eye(4))) < 1e-10
    r.check_physical()


def test_ptm_z_gate():
    r = unitary_transfer(np.diag([1.0, -1.0]).astype(complex), 1)
    assert np.max(np.abs(r.R - np.diag([1.0, -1.0, -1.0, 1.0]))) < 1e-10


def test_ptm_cz_against_pauli_conjugation_oracle():
    cz = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    r = unitary_transfer(cz, 2)
    ref = np.zeros((16, 16))
    labels = pauli_labels(2)
    for j, lj in enumerate(labels):
        out = cz @ pauli_matrix(lj) @ cz.conj().T
        for i, li in enumerate(labels):
            ref[i, j] = np.real(np.trace(pauli_matrix(li) @ out)) / 4
    assert np.max(np.abs(r.R - ref)) < 1e-9


def test_ptm_unitary_block_is_orthogonal():
    rng = np.random.default_rng(12)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    q, _ = np.linalg.qr(m)
    r = unitary_transfer(q, 2).check_physical()
    block = r.R[1:, 1:]
    assert np.max(np.abs(block.T @ block - np.eye(15))) < 1e-8


def test_ptm_composition():
    rng = np.random.default_rng(13)
    for _ in range(3):
        ma = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        mb = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        ua, _ = np.linalg.qr(ma)
        ub, _ = np.linalg.qr(mb)
        rab = unitary_transfer(ua @ ub, 1)
        assert np.max(np.abs(rab.R - unitary_transfer(ua, 1).R @ unitary_transfer(ub, 1).R)) < 1e-8


def test_ptm_nonunital_process():
    """Amplitude damping: affine Z component appears in the first column."""

    def damp(rho):
        p = 0.3
        k0 = np.array([[1, 0], [0, np.sqrt(1 - p)]])
        k1 = np.array([[0, np.sqrt(p)], [0, 0]])
        return k0 @ rho.matrix @ k0.T + k1 @ rho.matrix @ k1.T

    r = pauli_transfer(damp, 1).check_physical()
    assert abs(r.R[3, 0] - 0.3) < 1e-10
    assert abs(r.R[3, 3] - 0.7) < 1e-10
    assert abs(r.R[1, 1] - np.sqrt(0.7)) < 1e-10


def test_process_fidelity_values():
    ideal = unitary_transfer(np.eye(2, dtype=complex), 1)
    assert abs(process_fidelity(ideal, ideal) - 1.0) < 1e-12
    depol = TransferMatrix(1, np.diag([1.0, 0.0, 0.0, 0.0]))
    assert abs(process_fidelity(depol, ideal) - 0.5) < 1e-12
    cz = unitary_transfer(np.diag([1.0, 1, 1, -1]).astype(complex), 2)
    assert abs(process_fidelity(cz, cz) - 1.0) < 1e-12


def test_process_fidelity_dimension_mismatch():
    r1 = unitary_transfer(np.eye(2, dtype=complex), 1)
    r2 = unitary_transfer(np.eye(4, dtype=complex), 2)
    with pytest.raises(ValidationError):
        process_fidelity(r1, r2)


def test_state_fidelity_properties():
    space = CompositeSpace.single(ModeSpec.qubit())
    rho_g = DensityOp(space, np.diag([1.0, 0.0]).astype(complex))
    rho_e = DensityOp(space, np.diag([0.0, 1.0]).astype(complex))
    assert abs(state_fidelity(rho_g, rho_g) - 1.0) < 1e-12
    assert state_fidelity(rho_g, rho_e) < 1e-12
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        ra = a @ a.conj().T
        rb = b @ b.conj().T
        ra = DensityOp(space, ra / np.trace(ra))
        rb = DensityOp(space, rb / np.trace(rb))
        assert abs(state_fidelity(ra, rb) - state_fidelity(rb, ra)) < 1e-9


def test_ket_fidelity_matches_state_fidelity():
    space = CompositeSpace.single(ModeSpec.qubit())
    psi = Ket(space, np.array([1.0, 1.0]) / np.sqrt(2))
    rho = DensityOp(space, np.diag([0.5, 0.5]).astype(complex))
    assert abs(ket_fidelity(rho, psi) - 0.5) < 1e-12
    assert abs(ket_fidelity(psi, psi) - 1.0) < 1e-12
    assert abs(ket_fidelity(rho, psi) - state_fidelity(rho, psi.density())) < 1e-9
