"""
Eve's recovery-induced erasure (RIE) strategy: intercept-resend plus a
polarization-structured pre-pulse.

Non-deterministic mode models the pre-pulse as steady Poisson loading at
lambda_parallel / lambda_perp. Deterministic mode fires the pre-pulse at t=0
and the signal at t=delta, giving a step in the click probability.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from errors import ConfigurationError, DegenerateAttackError, DomainError, UsageError
from process.detector import AvailabilityModel, DeadTimeCurve, availability, dead_time_at
from process.quantum_core import Basis, PolarizationState, projection_prob, route_many

logger = logging.getLogger(__name__)


class AttackMode(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    RIE_NON_DETERMINISTIC = "rie_non_deterministic"
    RIE_DETERMINISTIC = "rie_deterministic"


@dataclass(frozen=True)
class AttackConfig:
    mode: AttackMode = AttackMode.NONE
    lambda_parallel: float = 0.0
    lambda_perp: float = 0.0
    delta: float = 0.0
    eve_basis_prior: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        if self.lambda_parallel < 0 or self.lambda_perp < 0:
            raise ConfigurationError("❌ loading rates must be >= 0")
        if self.mode is AttackMode.RIE_DETERMINISTIC and not self.delta > 0:
            raise ConfigurationError(f"❌ deterministic mode needs delta > 0, got {self.delta}")
        if not (0.0 <= self.eve_basis_prior <= 1.0):
            raise ConfigurationError(
                f"❌ eve_basis_prior must be in [0, 1], got {self.eve_basis_prior}"
            )

    @property
    def active(self) -> bool:
        return self.mode is not AttackMode.NONE

    @property
    def sends_prepulse(self) -> bool:
        return self.mode in (AttackMode.RIE_NON_DETERMINISTIC, AttackMode.RIE_DETERMINISTIC)


@dataclass(frozen=True)
class EveAction:
    eve_basis: Basis
    eve_bit: int
    resent_state: PolarizationState
    prepulse_state: PolarizationState
    prepulse_sent: bool = True
    # loading seen by a receiver aligned with Eve's basis, keyed by detector
    detector_loading: Optional[Dict[int, float]] = None
    prepulse_time: Optional[float] = None

    def __post_init__(self):
        expected = PolarizationState(self.eve_basis, self.eve_bit)
        if self.resent_state != expected:
            raise UsageError(f"❌ resent state {self.resent_state} must equal {expected}")
        if self.prepulse_state != expected.complement():
            raise UsageError(
                f"❌ pre-pulse {self.prepulse_state} must be {expected.complement()}"
            )


def prepare_action(eve_basis: Basis, eve_bit: int, config: AttackConfig) -> EveAction:
    """Resend state, complementary pre-pulse and scheduled loading for one measurement result."""
    eve_basis, eve_bit = Basis(eve_basis), int(eve_bit)
    resent = PolarizationState(eve_basis, eve_bit)
    loading = None
    prepulse_time = None
    if config.mode is AttackMode.RIE_NON_DETERMINISTIC:
        loading = {eve_bit: 0.0, 1 - eve_bit: config.lambda_parallel}
    elif config.mode is AttackMode.RIE_DETERMINISTIC:
        prepulse_time = 0.0
    return EveAction(
        eve_basis=eve_basis,
        eve_bit=eve_bit,
        resent_state=resent,
        prepulse_state=resent.complement(),
        prepulse_sent=config.sends_prepulse,
        detector_loading=loading,
        prepulse_time=prepulse_time,
    )


def intercept(incoming: PolarizationState, config: AttackConfig, rng: np.random.Generator,
              forced_basis: Optional[Basis] = None) -> EveAction:
    """Eve measures the incoming photon and prepares resend plus pre-pulse."""
    if not config.active:
        raise UsageError("❌ intercept called with attack mode 'none'")
    if forced_basis is not None:
        eve_basis = Basis(forced_basis)
    else:
        eve_basis = Basis.Z if rng.random() < config.eve_basis_prior else Basis.X
    eve_bit = 0 if rng.random() < projection_prob(incoming, eve_basis, 0) else 1
    return prepare_action(eve_basis, eve_bit, config)


def intercept_many(alice_basis: np.ndarray, alice_bit: np.ndarray, config: AttackConfig,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized intercept over basis/bit codes (0=Z, 1=X).

    Returns Eve's basis and bit codes. Every distinct result is turned into
    an EveAction once, so the pre-pulse check runs for the batch too.
    """
    if not config.active:
        raise UsageError("❌ intercept called with attack mode 'none'")
    alice_basis = np.asarray(alice_basis)
    eve_basis = (rng.random(alice_basis.shape) >= config.eve_basis_prior).astype(np.int8)
    eve_bit = route_many(alice_basis, alice_bit, eve_basis, rng)
    for code in np.unique(eve_basis.astype(np.int64) * 2 + eve_bit):
        prepare_action(Basis.from_code(int(code) // 2), int(code) % 2, config)
    return eve_basis, eve_bit


def branch_loading(aligned, config: AttackConfig,
                   background_rate: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    (signal, other) detector loading per round.

    `aligned` is True where Bob measures in Eve's basis. Aligned rounds put
    lambda_parallel on the other detector and only the receiver background
    on the signal detector; orthogonal rounds put lambda_perp on both.
    Without a steady pre-pulse both detectors see the background only.
    """
    aligned = np.asarray(aligned, dtype=bool)
    bg = np.full(aligned.shape, float(background_rate))
    if config.mode is not AttackMode.RIE_NON_DETERMINISTIC:
        return bg, bg.copy()
    signal = np.where(aligned, bg, bg + config.lambda_perp)
    other = np.where(aligned, bg + config.lambda_parallel, bg + config.lambda_perp)
    return signal, other


def loading_for_branch(action: EveAction, bob_basis: Basis, config: AttackConfig,
                       background_rate: float = 0.0) -> Dict[int, float]:
    """Per-detector observed loading in Bob's receiver, keyed by detector index."""
    if config.mode is not AttackMode.RIE_NON_DETERMINISTIC:
        raise UsageError(f"❌ loading_for_branch needs rie_non_deterministic, got {config.mode.value}")
    aligned = Basis(bob_basis) == action.eve_basis
    signal, other = branch_loading(aligned, config, background_rate)
    if aligned:
        return {action.eve_bit: float(signal), 1 - action.eve_bit: float(other)}
    return {0: float(signal), 1: float(other)}


def _availability_many(loading: np.ndarray, curve: DeadTimeCurve,
                       model: AvailabilityModel) -> np.ndarray:
    values, inverse = np.unique(loading, return_inverse=True)
    table = np.array([availability(v, curve, model) for v in values])
    return table[inverse].reshape(loading.shape)


def branch_availability(aligned, config: AttackConfig, curve: DeadTimeCurve,
                        model: AvailabilityModel,
                        background_rate: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Probability that the signal / other detector is live when the resent photon arrives."""
    aligned = np.asarray(aligned, dtype=bool)
    signal_load, other_load = branch_loading(aligned, config, background_rate)
    avail_signal = _availability_many(signal_load, curve, model)
    avail_other = _availability_many(other_load, curve, model)
    if config.mode is AttackMode.RIE_DETERMINISTIC:
        # aligned: pre-pulse lands on the other detector; orthogonal: on both
        step = deterministic_suppression(config.delta, curve, config.lambda_perp, 1.0)
        avail_signal = np.where(aligned, avail_signal, avail_signal * step)
        avail_other = avail_other * step
    return avail_signal, avail_other


def deterministic_suppression(delta: float, curve: DeadTimeCurve, loading_context: float,
                              p0: float) -> float:
    """
    Step click probability for a pre-pulse at t=0 and signal at t=delta.

    The dead interval is closed: delta == t_d counts as suppressed.
    """
    if not delta > 0:
        raise DomainError(f"❌ delta must be > 0, got {delta}")
    t_d = dead_time_at(curve, loading_context)
    return 0.0 if delta <= t_d else float(p0)


def bound_click_probabilities(config: AttackConfig, curve: DeadTimeCurve,
                              model: AvailabilityModel, p0: float) -> Tuple[float, float]:
    """
    (p_parallel, p_perp) as used by the closed-form analysis.

    Non-deterministic mode evaluates both click probabilities at their
    loading rates, matching the conservative bound. Deterministic mode uses an
    unloaded aligned path and evaluates t_d at lambda_perp.
    """
    p0 = float(p0)
    if config.mode in (AttackMode.NONE, AttackMode.INTERCEPT_RESEND):
        return p0, p0
    if config.mode is AttackMode.RIE_DETERMINISTIC:
        return p0, deterministic_suppression(config.delta, curve, config.lambda_perp, p0)
    return (p0 * availability(config.lambda_parallel, curve, model),
            p0 * availability(config.lambda_perp, curve, model))


def effective_r(config: AttackConfig, curve: DeadTimeCurve, model: AvailabilityModel,
                p0: float) -> float:
    """r = p_perp / p_parallel for the configured attack; 1 without a pre-pulse."""
    if config.mode in (AttackMode.NONE, AttackMode.INTERCEPT_RESEND):
        return 1.0
    p_par, p_perp = bound_click_probabilities(config, curve, model, p0)
    if p_par <= 0:
        raise DegenerateAttackError("❌ p_parallel is zero, the attack never produces a click")
    return p_perp / p_par


def branch_click_probabilities(config: AttackConfig, curve: DeadTimeCurve,
                               model: AvailabilityModel, p0: float,
                               background_rate: float = 0.0) -> Tuple[float, float]:
    """(p_parallel, p_perp) exactly as the round engine samples them."""
    avail_signal, _ = branch_availability(np.array([True, False]), config, curve, model,
                                          background_rate)
    return float(p0) * float(avail_signal[0]), float(p0) * float(avail_signal[1])
