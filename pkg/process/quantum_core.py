"""
Polarization algebra for the four protocol eigenstates and Born-rule routing
through an active-basis PBS receiver.

Bit convention: H=0, V=1 in Z and D=0, A=1 in X. Detector index equals the bit
value in the measurement basis.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import ConfigurationError


class Basis(str, Enum):
    Z = "Z"
    X = "X"

    @property
    def code(self) -> int:
        return 0 if self is Basis.Z else 1

    @classmethod
    def from_code(cls, code: int) -> "Basis":
        return cls.Z if int(code) == 0 else cls.X

    def other(self) -> "Basis":
        return Basis.X if self is Basis.Z else Basis.Z


_POLARIZATION = {
    (Basis.Z, 0): "H",
    (Basis.Z, 1): "V",
    (Basis.X, 0): "D",
    (Basis.X, 1): "A",
}


def _check_bit(bit) -> int:
    if bit not in (0, 1):
        raise ConfigurationError(f"❌ bit must be 0 or 1, got {bit!r}")
    return int(bit)


@dataclass(frozen=True)
class PolarizationState:
    basis: Basis
    bit: int

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        object.__setattr__(self, "bit", _check_bit(self.bit))

    def complement(self) -> "PolarizationState":
        return PolarizationState(self.basis, 1 - self.bit)

    @property
    def label(self) -> str:
        return f"{self.basis.value}{self.bit}"

    @property
    def polarization(self) -> str:
        return _POLARIZATION[(self.basis, self.bit)]

    @classmethod
    def parse(cls, text: str) -> "PolarizationState":
        """Parse a label such as "Z0" or "X1"."""
        text = str(text).strip().upper()
        if len(text) != 2 or text[0] not in ("Z", "X") or text[1] not in ("0", "1"):
            raise ConfigurationError(f"❌ Unknown state label: {text!r} (use Z0, Z1, X0, X1)")
        return cls(Basis(text[0]), int(text[1]))

    def __str__(self) -> str:
        return self.label


ALL_STATES = tuple(PolarizationState(b, v) for b in (Basis.Z, Basis.X) for v in (0, 1))


def projection_prob(state: PolarizationState, meas_basis: Basis, outcome: int) -> float:
    """|<outcome|state>|^2 with exact values 0, 0.5 and 1."""
    outcome = _check_bit(outcome)
    if state.basis == Basis(meas_basis):
        return 1.0 if outcome == state.bit else 0.0
    return 0.5


def route_through_pbs(state: PolarizationState, bob_basis: Basis, rng: np.random.Generator) -> int:
    """Sample the detector index a single photon lands on."""
    if state.basis == Basis(bob_basis):
        return state.bit
    return 0 if rng.random() < projection_prob(state, bob_basis, 0) else 1


def route_many(state_bases: np.ndarray, state_bits: np.ndarray, meas_bases: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    """
    Vectorized route_through_pbs over basis codes (0=Z, 1=X).

    Draws one uniform per element so the stream layout does not depend on how
    many rounds are aligned.
    """
    state_bases = np.asarray(state_bases)
    state_bits = np.asarray(state_bits)
    meas_bases = np.asarray(meas_bases)
    coin = (rng.random(state_bits.shape) >= 0.5).astype(np.int8)
    return np.where(state_bases == meas_bases, state_bits, coin).astype(np.int8)
