"""
Closed-form results: QBER versus r, the stealth threshold, mutual information
with and without the erasure symbol, sift probability and the conservative
stealth-bound scan. All information quantities are in bits.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

from scipy.optimize import bisect

from errors import ConfigurationError, DomainError
from process.detector import DeadTimeCurve, busy_fraction

logger = logging.getLogger(__name__)

DEFAULT_ABORT_QBER = 0.11
THRESHOLD_AGREEMENT = 1e-9


def _check_probability(x: float, name: str) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"❌ {name} must be in [0, 1], got {x}")
    return x


def binary_entropy(x: float) -> float:
    x = _check_probability(x, "x")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def e_obs(r: float) -> float:
    """Sifted QBER under the attack: p_perp / (2 (p_perp + p_par)) = r / (2 (1 + r))."""
    r = float(r)
    if r < 0:
        raise DomainError(f"❌ r must be >= 0, got {r}")
    return r / (2.0 * (1.0 + r))


def r_threshold_closed_form(e_abort: float) -> float:
    return 2.0 * e_abort / (1.0 - 2.0 * e_abort)


def r_threshold(e_abort: float = DEFAULT_ABORT_QBER) -> float:
    """
    Largest r with e_obs(r) below e_abort, found by bisection and checked
    against the closed form 2e / (1 - 2e).
    """
    e_abort = float(e_abort)
    if not (0.0 < e_abort < 0.5):
        raise DomainError(f"❌ e_abort must be in (0, 0.5), got {e_abort}")
    hi = 1.0
    while e_obs(hi) < e_abort:
        hi *= 2.0
    root = bisect(lambda r: e_obs(r) - e_abort, 0.0, hi, xtol=1e-13, rtol=1e-15, maxiter=400)
    closed = r_threshold_closed_form(e_abort)
    if abs(root - closed) > THRESHOLD_AGREEMENT * max(1.0, closed):
        raise DomainError(
            f"❌ bisection ({root!r}) and closed form ({closed!r}) disagree for e_abort={e_abort}"
        )
    return root


def sift_probability(p_par: float, p_perp: float) -> float:
    return (_check_probability(p_par, "p_par") + _check_probability(p_perp, "p_perp")) / 4.0


def erasure_probability(p_par: float, p_perp: float) -> float:
    """Per-round no-click probability with equal Eve basis priors."""
    return 1.0 - (_check_probability(p_par, "p_par") + _check_probability(p_perp, "p_perp")) / 2.0


@dataclass(frozen=True)
class ChannelParams:
    """Erasure-and-error channel BEC(epsilon) + BSC(e)."""

    epsilon: float
    e: float

    def __post_init__(self):
        _check_probability(self.epsilon, "epsilon")
        if not (0.0 <= self.e <= 0.5):
            raise DomainError(f"❌ e must be in [0, 0.5], got {self.e}")


def mutual_info_erasure_bsc(params: ChannelParams) -> float:
    # 1 - (eps + (1 - eps) h2(e)) = (1 - eps)(1 - h2(e))
    return (1.0 - params.epsilon) * (1.0 - binary_entropy(params.e))


def mutual_info_eve_sifted(r: float) -> float:
    r = float(r)
    if r < 0:
        raise DomainError(f"❌ r must be >= 0, got {r}")
    return 1.0 / (1.0 + r)


def mutual_info_bob_sifted(r: float) -> float:
    return 1.0 - binary_entropy(e_obs(r))


def mutual_info_curve(r_values: Sequence[float]) -> List[tuple]:
    """Rows (r, I(A;B), I(A;E)) per sifted detected bit."""
    if not len(r_values):
        raise ConfigurationError("❌ mutual-information grid is empty")
    return [(float(r), mutual_info_bob_sifted(r), mutual_info_eve_sifted(r)) for r in r_values]


def r_bound(lambda_par: float, lambda_perp: float, curve: DeadTimeCurve) -> float:
    """(1 - lambda_perp t_d(lambda_perp)) / (1 - lambda_par t_d(lambda_par))."""
    busy_par = busy_fraction(lambda_par, curve)
    busy_perp = busy_fraction(lambda_perp, curve)
    if busy_par >= 1.0 or busy_perp >= 1.0:
        raise DomainError(
            f"❌ linear availability saturated: busy fractions {busy_par:.4f}, {busy_perp:.4f}"
        )
    return (1.0 - busy_perp) / (1.0 - busy_par)


@dataclass(frozen=True)
class StealthScanRow:
    lambda_parallel: float
    lambda_perp: float
    r_bound: Optional[float]
    stealthy: bool
    valid: bool = True


def stealth_scan(lambda_par_list: Sequence[float], lambda_perp_grid: Sequence[float],
                 curve: DeadTimeCurve, e_abort: float = DEFAULT_ABORT_QBER) -> List[StealthScanRow]:
    """Full Cartesian scan; saturated cells are kept and flagged invalid."""
    if not len(lambda_par_list) or not len(lambda_perp_grid):
        raise ConfigurationError("❌ stealth scan grids must be non-empty")
    threshold = r_threshold(e_abort)
    rows = []
    invalid = 0
    for lam_par in lambda_par_list:
        for lam_perp in lambda_perp_grid:
            try:
                value = r_bound(lam_par, lam_perp, curve)
            except DomainError:
                invalid += 1
                rows.append(StealthScanRow(float(lam_par), float(lam_perp), None, False, False))
                continue
            rows.append(StealthScanRow(float(lam_par), float(lam_perp), value, value < threshold))
    if invalid:
        logger.warning("⚠️ %d scan cells outside the linear-model domain were flagged", invalid)
    return rows


def stealth_crossing(lambda_par: float, lambda_perp_grid: Sequence[float], curve: DeadTimeCurve,
                     e_abort: float = DEFAULT_ABORT_QBER) -> Optional[float]:
    """First lambda_perp where r_bound drops below r_threshold, linearly interpolated."""
    threshold = r_threshold(e_abort)
    previous = None
    for lam in sorted(float(x) for x in lambda_perp_grid):
        try:
            value = r_bound(lambda_par, lam, curve)
        except DomainError:
            break
        if value < threshold:
            if previous is None:
                return lam
            lam0, v0 = previous
            return lam0 + (v0 - threshold) * (lam - lam0) / (v0 - value)
        previous = (lam, value)
    return None


def closed_form_summary(p_par: float, p_perp: float,
                        e_abort: float = DEFAULT_ABORT_QBER) -> dict:
    if not p_par > 0:
        raise DomainError("❌ p_par must be > 0 for a finite r")
    r = p_perp / p_par
    threshold = r_threshold(e_abort)
    qber = e_obs(r)
    return {
        "p_parallel": p_par,
        "p_perp": p_perp,
        "r": r,
        "e_obs": qber,
        "sift_probability": sift_probability(p_par, p_perp),
        "erasure_probability": erasure_probability(p_par, p_perp),
        "i_ab": mutual_info_bob_sifted(r),
        "i_ae": mutual_info_eve_sifted(r),
        "r_threshold": threshold,
        "e_abort": e_abort,
        "stealthy": r < threshold,
        "abort": qber >= e_abort,
    }


def no_attack_summary(p0: float, e_abort: float = DEFAULT_ABORT_QBER) -> dict:
    """Closed-form figures with no eavesdropper: error-free sifting, no r to speak of."""
    p0 = _check_probability(p0, "p0")
    return {
        "p_parallel": p0,
        "p_perp": p0,
        "r": None,
        "e_obs": 0.0,
        "sift_probability": sift_probability(p0, p0),
        "erasure_probability": erasure_probability(p0, p0),
        "i_ab": 1.0,
        "i_ae": 0.0,
        "r_threshold": r_threshold(e_abort),
        "e_abort": e_abort,
        "stealthy": None,
        "abort": False,
    }
