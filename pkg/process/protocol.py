"""
Round-by-round BBM92/BB84 engine (prepare-and-measure reduction) with active
basis choice, sifting, QBER estimation and the abort decision.

Rounds are simulated in vectorized chunks. Chunk k always draws from
derive_rng(seed, k), so reports do not depend on the worker count.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ConfigurationError, UsageError
from process.adversary import (AttackConfig, AttackMode, branch_availability, intercept,
                               intercept_many, loading_for_branch)
from process.detector import AvailabilityModel, DeadTimeCurve, availability
from process.quantum_core import Basis, PolarizationState, route_many, route_through_pbs
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

NO_EVE = -1
ERASURE = -1


@dataclass(frozen=True)
class ProtocolConfig:
    n_rounds: int = 100_000
    abort_threshold: float = 0.11
    basis_prior: float = 0.5
    p0: float = 1.0
    dead_time_curve: DeadTimeCurve = field(default_factory=DeadTimeCurve.default)
    availability_model: AvailabilityModel = AvailabilityModel.EXPONENTIAL
    seed: int = 0
    # channel transmission outside the detectors, multiplies p0
    transmission: float = 1.0
    background_rate: float = 0.0
    dark_count_rate: float = 0.0
    detection_window: float = 1e-9
    fixed_alice: Optional[PolarizationState] = None
    chunk_size: int = 65_536

    def __post_init__(self):
        object.__setattr__(self, "availability_model", AvailabilityModel(self.availability_model))
        if isinstance(self.fixed_alice, str):
            object.__setattr__(self, "fixed_alice", PolarizationState.parse(self.fixed_alice))
        if int(self.n_rounds) < 1:
            raise ConfigurationError(f"❌ n_rounds must be >= 1, got {self.n_rounds}")
        if not (0.0 < self.abort_threshold < 0.5):
            raise ConfigurationError(f"❌ abort_threshold must be in (0, 0.5), got {self.abort_threshold}")
        if not (0.0 < self.basis_prior < 1.0):
            raise ConfigurationError(f"❌ basis_prior must be in (0, 1), got {self.basis_prior}")
        if not (0.0 < self.p0 <= 1.0):
            raise ConfigurationError(f"❌ p0 must be in (0, 1], got {self.p0}")
        if not (0.0 <= self.transmission <= 1.0):
            raise ConfigurationError(f"❌ transmission must be in [0, 1], got {self.transmission}")
        if self.background_rate < 0 or self.dark_count_rate < 0 or self.detection_window < 0:
            raise ConfigurationError("❌ background, dark count rate and window must be >= 0")
        if int(self.chunk_size) < 1:
            raise ConfigurationError(f"❌ chunk_size must be >= 1, got {self.chunk_size}")

    @property
    def receiver_loading(self) -> float:
        """Noise every detector sees regardless of Eve: background plus dark counts."""
        return self.background_rate + self.dark_count_rate

    @property
    def dark_click_probability(self) -> float:
        return -math.expm1(-self.dark_count_rate * self.detection_window)

    @property
    def effective_p0(self) -> float:
        return self.p0 * self.transmission


@dataclass(frozen=True)
class RoundRecord:
    alice_basis: Basis
    alice_bit: int
    eve_basis: Optional[Basis]
    eve_bit: Optional[int]
    bob_basis: Basis
    outcome: Optional[int]
    sifted: bool
    error: Optional[bool]
    double_click: bool = False

    def __post_init__(self):
        if self.sifted and (self.outcome is None or self.alice_basis != self.bob_basis):
            raise UsageError("❌ sifted round needs a click and matching bases")
        if self.sifted != (self.error is not None):
            raise UsageError("❌ error flag is defined iff the round is sifted")
        if self.sifted and self.error != (self.outcome != self.alice_bit):
            raise UsageError("❌ error flag disagrees with the outcome")

    @property
    def erasure(self) -> bool:
        return self.outcome is None


BranchKey = Tuple[Optional[Basis], Optional[int], Basis]


@dataclass
class BranchStats:
    rounds: int = 0
    clicks: int = 0
    sifted: int = 0
    errors: int = 0

    @property
    def click_rate(self) -> Optional[float]:
        return self.clicks / self.rounds if self.rounds else None

    @property
    def error_rate(self) -> Optional[float]:
        return self.errors / self.sifted if self.sifted else None


# -------------------------------------------------------------------------
# Batch engine
# -------------------------------------------------------------------------
def _detect(config: ProtocolConfig, signal_det: np.ndarray, avail_signal: np.ndarray,
            avail_other: np.ndarray, rng: np.random.Generator):
    n = signal_det.size
    signal_up = rng.random(n) < avail_signal
    other_up = rng.random(n) < avail_other
    signal_fire = signal_up & (rng.random(n) < config.effective_p0)

    p_dark = config.dark_click_probability
    if p_dark > 0:
        signal_fire |= signal_up & (rng.random(n) < p_dark)
        other_fire = other_up & (rng.random(n) < p_dark)
        coin = rng.integers(0, 2, n, dtype=np.int8)
    else:
        other_fire = np.zeros(n, dtype=bool)
        coin = np.zeros(n, dtype=np.int8)

    double = signal_fire & other_fire
    clicked = signal_fire | other_fire
    outcome = np.where(signal_fire, signal_det, 1 - signal_det).astype(np.int8)
    # double clicks squash to a uniformly random bit
    outcome = np.where(double, coin, outcome)
    outcome = np.where(clicked, outcome, ERASURE).astype(np.int8)
    return clicked, double, outcome


def _simulate_batch(config: ProtocolConfig, attack: AttackConfig, n: int,
                    rng: np.random.Generator) -> Dict[str, np.ndarray]:
    prior = config.basis_prior

    # Alice เลือก basis/bit
    if config.fixed_alice is None:
        alice_basis = (rng.random(n) >= prior).astype(np.int8)
        alice_bit = rng.integers(0, 2, n, dtype=np.int8)
    else:
        alice_basis = np.full(n, config.fixed_alice.basis.code, dtype=np.int8)
        alice_bit = np.full(n, config.fixed_alice.bit, dtype=np.int8)

    # Eve ดักวัดแล้วส่งใหม่ (พร้อม pre-pulse ตาม mode)
    if attack.active:
        eve_basis, eve_bit = intercept_many(alice_basis, alice_bit, attack, rng)
        signal_basis, signal_bit = eve_basis, eve_bit
    else:
        eve_basis = np.full(n, NO_EVE, dtype=np.int8)
        eve_bit = np.full(n, NO_EVE, dtype=np.int8)
        signal_basis, signal_bit = alice_basis, alice_bit

    # Bob เลือก basis แล้ววัดผ่าน PBS
    bob_basis = (rng.random(n) >= prior).astype(np.int8)
    signal_det = route_many(signal_basis, signal_bit, bob_basis, rng)
    avail_signal, avail_other = branch_availability(
        signal_basis == bob_basis, attack, config.dead_time_curve,
        config.availability_model, config.receiver_loading,
    )
    clicked, double, outcome = _detect(config, signal_det, avail_signal, avail_other, rng)

    sifted = clicked & (alice_basis == bob_basis)
    error = sifted & (outcome != alice_bit)
    return {
        "alice_basis": alice_basis,
        "alice_bit": alice_bit,
        "eve_basis": eve_basis,
        "eve_bit": eve_bit,
        "bob_basis": bob_basis,
        "outcome": outcome,
        "clicked": clicked,
        "double": double,
        "sifted": sifted,
        "error": error,
    }


_N_BRANCH_CODES = 18


def _branch_codes(batch: Dict[str, np.ndarray]) -> np.ndarray:
    eb = batch["eve_basis"].astype(np.int64) + 1
    ebit = batch["eve_bit"].astype(np.int64) + 1
    return (eb * 3 + ebit) * 2 + batch["bob_basis"].astype(np.int64)


def _decode_branch(code: int) -> BranchKey:
    rest, bob = divmod(code, 2)
    eb, ebit = divmod(rest, 3)
    eve_basis = None if eb == 0 else Basis.from_code(eb - 1)
    eve_bit = None if ebit == 0 else ebit - 1
    return eve_basis, eve_bit, Basis.from_code(bob)


def _tally(batch: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    codes = _branch_codes(batch)
    eve_matched = batch["sifted"] & (batch["eve_basis"] == batch["alice_basis"])

    def count(mask):
        return np.bincount(codes[mask], minlength=_N_BRANCH_CODES).astype(np.int64)

    return {
        "rounds": np.bincount(codes, minlength=_N_BRANCH_CODES).astype(np.int64),
        "clicks": count(batch["clicked"]),
        "sifted": count(batch["sifted"]),
        "errors": count(batch["error"]),
        "double": count(batch["double"]),
        "eve_matched": count(eve_matched),
    }


def _run_chunk(args) -> Dict[str, np.ndarray]:
    config, attack, chunk_index, size = args
    rng = derive_rng(config.seed, chunk_index)
    return _tally(_simulate_batch(config, attack, size, rng))


# -------------------------------------------------------------------------
# Public operations
# -------------------------------------------------------------------------
def run_round(config: ProtocolConfig, attack: AttackConfig,
              rng: np.random.Generator) -> RoundRecord:
    """One round through the explicit path: intercept, per-branch loading, detection."""
    curve, model = config.dead_time_curve, config.availability_model
    if config.fixed_alice is None:
        alice_basis = Basis.Z if rng.random() < config.basis_prior else Basis.X
        alice = PolarizationState(alice_basis, int(rng.integers(0, 2)))
    else:
        alice = config.fixed_alice

    action = intercept(alice, attack, rng) if attack.active else None
    signal = action.resent_state if action is not None else alice
    bob_basis = Basis.Z if rng.random() < config.basis_prior else Basis.X
    signal_det = route_through_pbs(signal, bob_basis, rng)

    if attack.mode is AttackMode.RIE_NON_DETERMINISTIC:
        loading = loading_for_branch(action, bob_basis, attack, config.receiver_loading)
        avail_signal = availability(loading[signal_det], curve, model)
        avail_other = availability(loading[1 - signal_det], curve, model)
    else:
        avail_signal, avail_other = branch_availability(
            signal.basis == bob_basis, attack, curve, model, config.receiver_loading)

    clicked, double, outcome = _detect(
        config, np.array([signal_det], dtype=np.int8),
        np.atleast_1d(avail_signal), np.atleast_1d(avail_other), rng,
    )
    clicked = bool(clicked[0])
    sifted = clicked and alice.basis == bob_basis
    return RoundRecord(
        alice_basis=alice.basis,
        alice_bit=alice.bit,
        eve_basis=action.eve_basis if action is not None else None,
        eve_bit=action.eve_bit if action is not None else None,
        bob_basis=bob_basis,
        outcome=int(outcome[0]) if clicked else None,
        sifted=sifted,
        error=(int(outcome[0]) != alice.bit) if sifted else None,
        double_click=bool(double[0]),
    )


def simulate_rounds(config: ProtocolConfig, attack: AttackConfig, n: int,
                    rng: np.random.Generator) -> List[RoundRecord]:
    """Explicit per-round records for small runs and inspection."""
    return [run_round(config, attack, rng) for _ in range(int(n))]


@dataclass(frozen=True)
class SimulationReport:
    n_rounds: int
    n_clicks: int
    n_sifted: int
    n_errors: int
    n_double_clicks: int
    n_eve_matched: int
    qber_observed: Optional[float]
    sift_probability: float
    erasure_probability: float
    abort: bool
    abort_threshold: float
    attack_mode: str
    seed: int
    fixed_alice: Optional[str]
    per_branch_stats: Dict[BranchKey, BranchStats]

    @property
    def click_probability(self) -> float:
        return self.n_clicks / self.n_rounds

    @property
    def qber_stderr(self) -> Optional[float]:
        if not self.n_sifted or self.qber_observed is None:
            return None
        q = self.qber_observed
        return math.sqrt(q * (1.0 - q) / self.n_sifted)

    @property
    def eve_information(self) -> Optional[float]:
        """Fraction of sifted rounds where Eve's basis matched Alice's."""
        if not self.n_sifted or self.attack_mode == AttackMode.NONE.value:
            return None
        return self.n_eve_matched / self.n_sifted

    def branch_rows(self) -> List[dict]:
        rows = []
        for (eve_basis, eve_bit, bob_basis), stats in sorted(
                self.per_branch_stats.items(), key=lambda kv: _branch_sort_key(kv[0])):
            rows.append({
                "eve_basis": eve_basis.value if eve_basis else None,
                "eve_bit": eve_bit,
                "bob_basis": bob_basis.value,
                "rounds": stats.rounds,
                "clicks": stats.clicks,
                "sifted": stats.sifted,
                "errors": stats.errors,
                "click_rate": stats.click_rate,
                "error_rate": stats.error_rate,
            })
        return rows

    def to_dict(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "n_clicks": self.n_clicks,
            "n_sifted": self.n_sifted,
            "n_errors": self.n_errors,
            "n_double_clicks": self.n_double_clicks,
            "n_eve_matched": self.n_eve_matched,
            "qber_observed": self.qber_observed,
            "qber_stderr": self.qber_stderr,
            "sift_probability": self.sift_probability,
            "erasure_probability": self.erasure_probability,
            "click_probability": self.click_probability,
            "eve_information": self.eve_information,
            "abort": self.abort,
            "abort_threshold": self.abort_threshold,
            "attack_mode": self.attack_mode,
            "seed": self.seed,
            "fixed_alice": self.fixed_alice,
            "branches": self.branch_rows(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)


BRANCH_CSV_HEADER = ["eve_basis", "eve_bit", "bob_basis", "rounds", "clicks", "sifted",
                     "errors", "click_rate", "error_rate"]


def _branch_sort_key(key: BranchKey):
    eve_basis, eve_bit, bob_basis = key
    return (eve_basis.code if eve_basis else -1, -1 if eve_bit is None else eve_bit, bob_basis.code)


def run_simulation(config: ProtocolConfig, attack: AttackConfig, workers: int = 1) -> SimulationReport:
    n = int(config.n_rounds)
    chunk = int(config.chunk_size)
    tasks = [(config, attack, k, min(chunk, n - k * chunk)) for k in range(math.ceil(n / chunk))]
    logger.info("🚀 Simulating %d rounds in %d chunks (attack=%s, workers=%d)",
                n, len(tasks), attack.mode.value, workers)

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            tallies = list(pool.map(_run_chunk, tasks))
    else:
        tallies = [_run_chunk(t) for t in tasks]

    totals = {k: sum(t[k] for t in tallies) for k in tallies[0]}
    per_branch = {}
    for code in range(_N_BRANCH_CODES):
        if totals["rounds"][code]:
            per_branch[_decode_branch(code)] = BranchStats(
                rounds=int(totals["rounds"][code]),
                clicks=int(totals["clicks"][code]),
                sifted=int(totals["sifted"][code]),
                errors=int(totals["errors"][code]),
            )

    n_clicks = int(totals["clicks"].sum())
    n_sifted = int(totals["sifted"].sum())
    n_errors = int(totals["errors"].sum())
    qber = n_errors / n_sifted if n_sifted else None
    # no sifted bits means nothing can be certified
    abort = True if qber is None else qber >= config.abort_threshold
    report = SimulationReport(
        n_rounds=n,
        n_clicks=n_clicks,
        n_sifted=n_sifted,
        n_errors=n_errors,
        n_double_clicks=int(totals["double"].sum()),
        n_eve_matched=int(totals["eve_matched"].sum()),
        qber_observed=qber,
        sift_probability=n_sifted / n,
        erasure_probability=1.0 - n_clicks / n,
        abort=abort,
        abort_threshold=config.abort_threshold,
        attack_mode=attack.mode.value,
        seed=int(config.seed),
        fixed_alice=config.fixed_alice.label if config.fixed_alice else None,
        per_branch_stats=per_branch,
    )
    if qber is None:
        logger.warning("⚠️ No sifted rounds, QBER undefined")
    else:
        logger.info("✅ QBER=%.5f sift=%.5f erasure=%.5f abort=%s",
                    qber, report.sift_probability, report.erasure_probability, abort)
    return report


@dataclass(frozen=True)
class BranchRow:
    eve_basis: Optional[Basis]
    eve_bit: Optional[int]
    prepulse: Optional[str]
    bob_basis: Basis
    signal_detector_loaded: str
    rounds: int
    clicks: int
    click_rate: Optional[float]
    kept: bool
    sifted: int
    errors: int
    error_rate: Optional[float]
    insufficient_data: bool


def branch_table(report: SimulationReport,
                 fixed_alice: Union[PolarizationState, str]) -> List[BranchRow]:
    """One row per (eve_basis, eve_bit, bob_basis) branch for a fixed Alice state."""
    if isinstance(fixed_alice, str):
        fixed_alice = PolarizationState.parse(fixed_alice)
    if report.fixed_alice != fixed_alice.label:
        raise UsageError(
            f"❌ report was collected with fixed_alice={report.fixed_alice}, not {fixed_alice.label}"
        )

    if report.attack_mode == AttackMode.NONE.value:
        keys = [(None, None, b) for b in (Basis.Z, Basis.X)]
    else:
        keys = [(eb, bit, bb) for eb in (Basis.Z, Basis.X) for bit in (0, 1)
                for bb in (Basis.Z, Basis.X)]
    with_prepulse = report.attack_mode in (AttackMode.RIE_NON_DETERMINISTIC.value,
                                           AttackMode.RIE_DETERMINISTIC.value)

    rows = []
    for eve_basis, eve_bit, bob_basis in keys:
        stats = report.per_branch_stats.get((eve_basis, eve_bit, bob_basis), BranchStats())
        if with_prepulse:
            prepulse = PolarizationState(eve_basis, eve_bit).complement().label
            loaded = "No" if bob_basis == eve_basis else "Both partially"
        else:
            prepulse, loaded = None, "-"
        if stats.rounds == 0:
            logger.warning("⚠️ Branch eve=%s%s bob=%s has no rounds",
                           eve_basis.value if eve_basis else "-",
                           "" if eve_bit is None else eve_bit, bob_basis.value)
        rows.append(BranchRow(
            eve_basis=eve_basis,
            eve_bit=eve_bit,
            prepulse=prepulse,
            bob_basis=bob_basis,
            signal_detector_loaded=loaded,
            rounds=stats.rounds,
            clicks=stats.clicks,
            click_rate=stats.click_rate,
            kept=bob_basis == fixed_alice.basis,
            sifted=stats.sifted,
            errors=stats.errors,
            error_rate=stats.error_rate,
            insufficient_data=stats.rounds == 0,
        ))
    return rows
