"""Affine maps between single-qubit Bloch coordinates and box-bounded variables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .qsim import ContractError

CHANNELS = ("theta", "phi", "r")
# native width of each Bloch channel
CHANNEL_RANGE = {"theta": math.pi, "phi": 2 * math.pi, "r": 1.0}
VARS_PER_QUBIT = {"pure": 2, "mixed": 3}


@dataclass(frozen=True)
class VariableDomain:
    lo: float
    hi: float
    half_open: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ContractError(f"domain bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ContractError(f"domain needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        upper = x < self.hi if self.half_open else x <= self.hi
        return (x >= self.lo) & upper


def periodic(lo: float = 0.0, hi: float = 2 * math.pi) -> VariableDomain:
    return VariableDomain(lo, hi, half_open=True)


def capacity(mode: str, n_qubits: int) -> int:
    """Largest number of variables ``n_qubits`` can carry in the given mode."""
    if mode not in VARS_PER_QUBIT:
        raise ContractError(f"unknown encoding mode {mode!r}")
    if n_qubits < 1:
        raise ContractError("n_qubits must be at least 1")
    return VARS_PER_QUBIT[mode] * n_qubits


def qubits_needed(mode: str, n_vars: int) -> int:
    if mode not in VARS_PER_QUBIT:
        raise ContractError(f"unknown encoding mode {mode!r}")
    return -(-n_vars // VARS_PER_QUBIT[mode])


@dataclass(frozen=True)
class EncodingMap:
    """Assignment of each variable to a (qubit, channel) pair plus its domain.

    Build one with :meth:`create`; the constructor only validates.
    """

    mode: str
    n_vars: int
    n_qubits: int
    slots: tuple
    domains: tuple

    def __post_init__(self):
        if self.mode not in VARS_PER_QUBIT:
            raise ContractError(f"unknown encoding mode {self.mode!r}")
        if len(self.slots) != self.n_vars or len(self.domains) != self.n_vars:
            raise ContractError("every variable needs exactly one slot and one domain")
        if self.n_qubits != qubits_needed(self.mode, self.n_vars):
            raise ContractError(
                f"{self.mode} mode with {self.n_vars} variables uses "
                f"{qubits_needed(self.mode, self.n_vars)} qubits, not {self.n_qubits}"
            )
        if len(set(self.slots)) != len(self.slots):
            raise ContractError("a (qubit, channel) pair is assigned twice")
        for q, ch in self.slots:
            if ch not in CHANNELS or not 0 <= q < self.n_qubits:
                raise ContractError(f"invalid slot ({q}, {ch!r})")
            if self.mode == "pure" and ch == "r":
                raise ContractError("pure mode cannot use the radial channel")

    @classmethod
    def create(cls, mode: str, domains: Sequence[VariableDomain]) -> "EncodingMap":
        """Variable-major assignment: variable i sits on qubit i // k, channel i % k."""
        k = VARS_PER_QUBIT.get(mode)
        if k is None:
            raise ContractError(f"unknown encoding mode {mode!r}")
        domains = tuple(domains)
        if not domains:
            raise ContractError("at least one variable is required")
        slots = tuple((i // k, CHANNELS[i % k]) for i in range(len(domains)))
        return cls(mode, len(domains), qubits_needed(mode, len(domains)), slots, domains)

    @cached_property
    def _tables(self):
        qubit = np.array([q for q, _ in self.slots])
        channel = np.array([CHANNELS.index(ch) for _, ch in self.slots])
        width = np.array([CHANNEL_RANGE[ch] for _, ch in self.slots])
        lo = np.array([d.lo for d in self.domains])
        hi = np.array([d.hi for d in self.domains])
        half_open = np.array([d.half_open for d in self.domains])
        top = np.where(half_open, np.nextafter(hi, lo), hi)
        return qubit, channel, width, lo, hi, top


def decode_array(bloch: np.ndarray, emap: EncodingMap, clip: bool = True) -> np.ndarray:
    """Vectorized :func:`decode` over ``(..., n_qubits, 3)`` arrays of (theta, phi, r).

    ``clip=False`` keeps the affine map outside the domain, which gives
    difference quotients a smooth extension at the channel edges.
    """
    bloch = np.asarray(bloch, dtype=float)
    if bloch.shape[-2:] != (emap.n_qubits, 3):
        raise ContractError(
            f"expected Bloch data for {emap.n_qubits} qubits, got shape {bloch.shape}"
        )
    qubit, channel, width, lo, hi, top = emap._tables
    v = bloch[..., qubit, channel]
    x = lo + (v / width) * (hi - lo)
    return np.clip(x, lo, top) if clip else x


def decode(blochs, emap: EncodingMap) -> np.ndarray:
    """Variables encoded by a list of per-qubit ``BlochParams``."""
    blochs = list(blochs)
    if len(blochs) != emap.n_qubits:
        raise ContractError(f"expected {emap.n_qubits} Bloch triples, got {len(blochs)}")
    return decode_array(np.array([tuple(b) for b in blochs], dtype=float), emap)
