"""Dense statevector simulator for small parametrized circuits.

Qubit 0 is the most significant bit of the basis index, so ``|10>`` is the
state with qubit 0 set. All routines accept either a single amplitude vector
of length ``2**n`` or a batch of shape ``(B, 2**n)``; batching is how the
optimizer evaluates many parameter vectors in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("CNOT", "H")

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

_NORM_TOL = 1e-10
_TRACE_TOL = 1e-10


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex)
        if self.n_qubits < 1:
            raise ContractError("n_qubits must be positive")
        if amps.shape != (2**self.n_qubits,):
            raise ContractError(
                f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        """The computational basis state ``|0...0>``."""
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Basis state from a bit string such as ``"10"`` (qubit 0 first)."""
        n = len(bits)
        amps = np.zeros(2**n, dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(n, amps)

    @classmethod
    def product(cls, singles: Sequence[Sequence[complex]]) -> "StateVector":
        """Tensor product of normalized single-qubit states, qubit 0 first."""
        amps = np.ones(1, dtype=complex)
        for s in singles:
            s = np.asarray(s, dtype=complex)
            amps = np.kron(amps, s / np.linalg.norm(s))
        return cls(len(singles), amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: Optional[int] = None
    param_slot: Optional[int] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ContractError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ContractError("CNOT needs a control qubit")
            if self.control == self.target:
                raise ContractError("CNOT control and target must differ")
        elif self.control is not None:
            raise ContractError(f"{self.kind} takes no control qubit")
        is_rotation = self.kind in ROTATIONS
        if is_rotation != (self.param_slot is not None):
            raise ContractError("param_slot is required for rotations and only for them")


@dataclass(frozen=True)
class Ansatz:
    n_qubits: int
    layers: int
    ops: tuple
    n_params: int = field(default=-1)

    def __post_init__(self):
        ops = tuple(self.ops)
        object.__setattr__(self, "ops", ops)
        slots = sorted({op.param_slot for op in ops if op.param_slot is not None})
        n_params = len(slots) if self.n_params < 0 else self.n_params
        object.__setattr__(self, "n_params", n_params)
        if slots != list(range(n_params)):
            raise ContractError("param slots must cover 0..n_params-1 exactly")
        for op in ops:
            qubits = [op.target] + ([op.control] if op.control is not None else [])
            if any(q < 0 or q >= self.n_qubits for q in qubits):
                raise ContractError(f"gate {op} addresses a qubit outside the register")

    @cached_property
    def _program(self) -> list:
        return _compile(self)

    @cached_property
    def slot_positions(self) -> dict:
        """Map of parameter slot to the program steps that read it."""
        positions: dict = {}
        for i, step in enumerate(self._program):
            if step[0] == "rot":
                positions.setdefault(step[3], []).append(i)
        return positions


def hardware_efficient_ansatz(n_qubits: int, layers: int = 3) -> Ansatz:
    """RY and RZ on every qubit followed by a CNOT chain, repeated ``layers`` times."""
    if n_qubits < 1 or layers < 1:
        raise ContractError("n_qubits and layers must be positive")
    ops = []
    slot = 0
    for _ in range(layers):
        for q in range(n_qubits):
            ops.append(GateOp("RY", q, param_slot=slot))
            ops.append(GateOp("RZ", q, param_slot=slot + 1))
            slot += 2
        for q in range(n_qubits - 1):
            ops.append(GateOp("CNOT", q + 1, control=q))
    return Ansatz(n_qubits, layers, tuple(ops))


def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


def _compile(ansatz: Ansatz) -> list:
    # consecutive CNOTs fold into a single gather permutation
    program: list = []
    n = ansatz.n_qubits
    for op in ansatz.ops:
        if op.kind == "CNOT":
            perm = _cnot_permutation(n, op.control, op.target)
            if program and program[-1][0] == "perm":
                program[-1] = ("perm", program[-1][1][perm])
            else:
                program.append(("perm", perm))
        elif op.kind == "H":
            program.append(("h", op.target))
        else:
            program.append(("rot", op.kind, op.target, op.param_slot))
    return program


def _split(psi: np.ndarray, n: int, q: int) -> tuple:
    view = psi.reshape(psi.shape[0], 2**q, 2, 2 ** (n - q - 1))
    return view[:, :, 0, :], view[:, :, 1, :]


def _apply_rotation(psi: np.ndarray, n: int, kind: str, q: int, angle) -> None:
    """In-place rotation on a batch; ``angle`` is a scalar or one value per row."""
    half = np.asarray(angle, dtype=float) / 2.0
    if half.ndim:
        half = half[:, None, None]
    a, b = _split(psi, n, q)
    if kind == "RZ":
        a *= np.exp(-1j * half)
        b *= np.exp(1j * half)
        return
    c, s = np.cos(half), np.sin(half)
    a0 = a.copy()
    if kind == "RY":
        a *= c
        a -= s * b
        b *= c
        b += s * a0
    else:  # RX
        a *= c
        a -= 1j * s * b
        b *= c
        b -= 1j * s * a0


def _apply_hadamard(psi: np.ndarray, n: int, q: int) -> None:
    a, b = _split(psi, n, q)
    a0 = a.copy()
    a += b
    a *= 1 / np.sqrt(2)
    b *= -1
    b += a0
    b *= 1 / np.sqrt(2)


def run_program(psi: np.ndarray, ansatz: Ansatz, omegas: np.ndarray) -> np.ndarray:
    """Apply the ansatz to a batch of states with one parameter vector per row."""
    n = ansatz.n_qubits
    for step in ansatz._program:
        if step[0] == "rot":
            _apply_rotation(psi, n, step[1], step[2], omegas[:, step[3]])
        elif step[0] == "perm":
            psi = psi[:, step[1]]
        else:
            _apply_hadamard(psi, n, step[1])
    return psi


def simulate(ansatz: Ansatz, omegas: np.ndarray) -> np.ndarray:
    """Amplitudes after running the ansatz from ``|0...0>`` for each row of ``omegas``."""
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    if omegas.shape[1] != ansatz.n_params:
        raise ContractError(
            f"omega has {omegas.shape[1]} entries, ansatz needs {ansatz.n_params}"
        )
    psi = np.zeros((omegas.shape[0], 2**ansatz.n_qubits), dtype=complex)
    psi[:, 0] = 1.0
    return run_program(psi, ansatz, omegas)


def simulate_central_differences(ansatz: Ansatz, omega: np.ndarray, eps: float) -> np.ndarray:
    """States for ``omega`` and every ``omega +/- eps e_j`` in one sweep.

    Row 0 is the unperturbed state, rows ``2j+1`` and ``2j+2`` carry the
    ``+eps`` and ``-eps`` shift of slot ``j``. Perturbed rows are spawned only
    when the sweep reaches the gate that reads their slot, so the shared
    prefix of the circuit is simulated once.
    """
    omega = np.asarray(omega, dtype=float)
    P = ansatz.n_params
    positions = ansatz.slot_positions
    j = np.arange(P)
    if any(len(v) != 1 for v in positions.values()):
        shifted = np.repeat(omega[None, :], 2 * P + 1, axis=0)
        shifted[2 * j + 1, j] += eps
        shifted[2 * j + 2, j] -= eps
        return simulate(ansatz, shifted)

    n = ansatz.n_qubits
    # work in spawn order so the live rows are always a contiguous prefix
    order = sorted(range(P), key=lambda s: positions[s][0])
    spawn_at = {positions[s][0]: k for k, s in enumerate(order)}
    angles = np.repeat(omega[None, :], 2 * P + 1, axis=0)
    for k, s in enumerate(order):
        angles[2 * k + 1, s] += eps
        angles[2 * k + 2, s] -= eps
    psi = np.zeros((2 * P + 1, 2**n), dtype=complex)
    psi[0, 0] = 1.0
    active = 1
    for i, step in enumerate(ansatz._program):
        if i in spawn_at:
            k = spawn_at[i]
            psi[2 * k + 1] = psi[0]
            psi[2 * k + 2] = psi[0]
            active = 2 * k + 3
        live = psi[:active]
        if step[0] == "rot":
            _apply_rotation(live, n, step[1], step[2], angles[:active, step[3]])
        elif step[0] == "perm":
            live[...] = live[:, step[1]]
        else:
            _apply_hadamard(live, n, step[1])
    out = np.empty_like(psi)
    out[0] = psi[0]
    for k, s in enumerate(order):
        out[2 * s + 1] = psi[2 * k + 1]
        out[2 * s + 2] = psi[2 * k + 2]
    return out


def _apply_pauli(psi: np.ndarray, n: int, kind: str, q: int) -> np.ndarray:
    out = np.empty_like(psi)
    a, b = _split(psi, n, q)
    oa, ob = _split(out, n, q)
    if kind == "RX":
        oa[...], ob[...] = b, a
    elif kind == "RY":
        oa[...], ob[...] = -1j * b, 1j * a
    else:
        oa[...], ob[...] = a, -b
    return out


def apply_pauli_sum(psi: np.ndarray, n: int, weights: np.ndarray) -> np.ndarray:
    """``H psi`` for ``H = sum_q wx X_q + wy Y_q + wz Z_q`` with ``weights`` of shape ``(n, 3)``."""
    out = np.zeros_like(psi)
    for q in range(n):
        wx, wy, wz = weights[q]
        a, b = _split(psi, n, q)
        oa, ob = _split(out, n, q)
        oa += (wx - 1j * wy) * b + wz * a
        ob += (wx + 1j * wy) * a - wz * b
    return out


def expectation_gradient(ansatz: Ansatz, omega: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exact gradient in ``omega`` of ``<psi| sum_q w_q . sigma_q |psi>`` by an adjoint sweep.

    One forward run plus one backward pass that un-applies the gates to
    both the state and ``H psi``; each rotation contributes
    ``Im <lambda| G |phi>`` with ``G`` its Pauli generator.
    """
    n = ansatz.n_qubits
    omega = np.asarray(omega, dtype=float)
    phi = simulate(ansatz, omega[None, :])
    lam = apply_pauli_sum(phi, n, np.asarray(weights, dtype=float))
    grad = np.zeros(ansatz.n_params)
    for step in reversed(ansatz._program):
        if step[0] == "rot":
            _, kind, q, slot = step
            g_phi = _apply_pauli(phi, n, kind, q)
            grad[slot] += float(np.imag(np.vdot(lam[0], g_phi[0])))
            _apply_rotation(phi, n, kind, q, -omega[slot])
            _apply_rotation(lam, n, kind, q, -omega[slot])
        elif step[0] == "perm":
            inv = np.argsort(step[1])
            phi = phi[:, inv]
            lam = lam[:, inv]
        else:
            _apply_hadamard(phi, n, step[1])
            _apply_hadamard(lam, n, step[1])
    return grad


def pauli_expectations(psi: np.ndarray, n_qubits: int) -> np.ndarray:
    """Exact <X>, <Y>, <Z> of every qubit; returns shape ``(B, n_qubits, 3)``."""
    psi = np.atleast_2d(psi)
    out = np.empty((psi.shape[0], n_qubits, 3))
    for q in range(n_qubits):
        a, b = _split(psi, n_qubits, q)
        xy = 2.0 * np.einsum("bij,bij->b", a.conj(), b)
        out[:, q, 0] = xy.real
        out[:, q, 1] = xy.imag
        out[:, q, 2] = np.einsum("bij,bij->b", a.conj(), a).real - np.einsum(
            "bij,bij->b", b.conj(), b
        ).real
    return out


def sample_expectations(expectations: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot-noise estimate of Pauli expectations via binomial outcome counts."""
    p_plus = np.clip((1.0 + expectations) / 2.0, 0.0, 1.0)
    counts = rng.binomial(shots, p_plus)
    return 2.0 * counts / shots - 1.0


def clamp_to_ball(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.where(norms > 1.0, vectors / np.maximum(norms, 1e-300), vectors)


class BlochParams(NamedTuple):
    theta: float
    phi: float
    r: float

    def density_matrix(self) -> "DensityMatrix1Q":
        n = self.r * np.array(
            [
                np.sin(self.theta) * np.cos(self.phi),
                np.sin(self.theta) * np.sin(self.phi),
                np.cos(self.theta),
            ]
        )
        return DensityMatrix1Q(0.5 * (IDENTITY + n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z))


@dataclass(frozen=True)
class DensityMatrix1Q:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.shape != (2, 2):
            raise ContractError("single-qubit density matrix must be 2x2")
        rho = rho.copy()
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    def bloch_vector(self) -> np.ndarray:
        rho = self.entries
        return np.real(
            [np.trace(rho @ PAULI_X), np.trace(rho @ PAULI_Y), np.trace(rho @ PAULI_Z)]
        )

    def is_physical(self, tol: float = 1e-10) -> bool:
        rho = self.entries
        if not np.allclose(rho, rho.conj().T, atol=tol):
            return False
        if abs(np.trace(rho) - 1.0) > tol:
            return False
        return bool(np.linalg.eigvalsh(rho).min() >= -tol)


def bloch_angles(vectors: np.ndarray) -> np.ndarray:
    """Convert Bloch vectors ``(..., 3)`` into ``(..., 3)`` arrays of theta, phi, r."""
    vectors = np.asarray(vectors, dtype=float)
    r = np.linalg.norm(vectors, axis=-1)
    safe = np.where(r < 1e-12, 1.0, r)
    theta = np.arccos(np.clip(vectors[..., 2] / safe, -1.0, 1.0))
    phi = np.mod(np.arctan2(vectors[..., 1], vectors[..., 0]), 2 * np.pi)
    # mod can round up to exactly 2*pi for tiny negative angles
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    tiny = r < 1e-12
    theta = np.where(tiny, 0.0, theta)
    phi = np.where(tiny, 0.0, phi)
    r = np.where(tiny, 0.0, r)
    return np.stack([theta, phi, r], axis=-1)


def _check_state(state: StateVector, ansatz: Optional[Ansatz] = None) -> None:
    if ansatz is not None and state.n_qubits != ansatz.n_qubits:
        raise ContractError(
            f"state has {state.n_qubits} qubits, ansatz acts on {ansatz.n_qubits}"
        )


def apply_circuit(state: StateVector, ansatz: Ansatz, omega: Iterable[float]) -> StateVector:
    """Run every gate of ``ansatz`` on ``state`` with parameters ``omega``."""
    _check_state(state, ansatz)
    omega = np.asarray(list(omega) if not isinstance(omega, np.ndarray) else omega, dtype=float)
    if omega.shape != (ansatz.n_params,):
        raise ContractError(
            f"omega has shape {omega.shape}, ansatz needs ({ansatz.n_params},)"
        )
    psi = np.array(state.amps, dtype=complex)[None, :]
    psi = run_program(psi, ansatz, omega[None, :])
    return StateVector(state.n_qubits, psi[0])


def reduced_density_matrix(state: StateVector, qubit: int) -> DensityMatrix1Q:
    """Partial trace of ``state`` over every qubit except ``qubit``."""
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    a, b = _split(np.array(state.amps)[None, :], state.n_qubits, qubit)
    a, b = a.ravel(), b.ravel()
    rho = np.array(
        [[np.vdot(a, a), np.vdot(b, a)], [np.vdot(a, b), np.vdot(b, b)]], dtype=complex
    )
    return DensityMatrix1Q(rho)


def bloch_params(rho: DensityMatrix1Q) -> BlochParams:
    """Spherical Bloch coordinates of a single-qubit density matrix."""
    entries = rho.entries
    if abs(np.trace(entries) - 1.0) > _TRACE_TOL * 100:
        raise ContractError(f"density matrix trace {np.trace(entries)} is not 1")
    if not np.allclose(entries, entries.conj().T, atol=_NORM_TOL * 100):
        raise ContractError("density matrix is not Hermitian")
    theta, phi, r = bloch_angles(rho.bloch_vector())
    return BlochParams(float(theta), float(phi), float(r))


def sampled_expectations(state: StateVector, qubit: int, shots: int, seed: int) -> np.ndarray:
    """Raw ``(<X>, <Y>, <Z>)`` estimates from ``shots`` measurements per axis."""
    if shots < 1:
        raise ContractError("shots must be at least 1")
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    exact = pauli_expectations(np.array(state.amps)[None, :], state.n_qubits)[0, qubit]
    return sample_expectations(exact, shots, np.random.default_rng(seed))


def sampled_bloch_params(state: StateVector, qubit: int, shots: int, seed: int) -> BlochParams:
    """Bloch coordinates estimated from ``shots`` projective measurements per Pauli axis."""
    est = clamp_to_ball(sampled_expectations(state, qubit, shots, seed))
    theta, phi, r = bloch_angles(est)
    return BlochParams(float(theta), float(phi), float(r))
