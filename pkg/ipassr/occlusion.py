"""Inline occlusion handling from the cycle consistency of attention maps.

A left pixel that survives the round trip left → right → left keeps a high
cycle probability; pixels without a counterpart in the other view lose it.
"""

import numpy as np
import numpy.typing as npt

from .const import DELTA_MAX, TAU
from .exceptions import ValueRangeError
from .model import AttentionMaps, ValidMask
from .tensor import Tensor

__all__ = [
    "cycle_probability",
    "relaxed_cycle_probability",
    "valid_mask",
    "detect_occlusions",
    "occlusion_from_mask",
]


def _cycle_term(
    m_rl: npt.NDArray[np.float64], m_lr: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    # term(h, w1) = sum_w2 m_rl(h, w1, w2) * m_lr(h, w2, w1)
    return np.einsum("hij,hji->hi", m_rl, m_lr)


def cycle_probability(maps: AttentionMaps) -> Tensor:
    """Probability that each left pixel maps to the right view and back to itself."""
    m_rl = maps.m_rl.astype(np.float64)
    m_lr = maps.m_lr.astype(np.float64)
    return _cycle_term(m_rl, m_lr).astype(np.float32)


def relaxed_cycle_probability(maps: AttentionMaps, delta_max: int = DELTA_MAX) -> Tensor:
    """Cycle probability accepting a return within ±delta_max pixels.

    Offsets that leave the image contribute nothing.
    """
    if delta_max < 0:
        raise ValueRangeError(f"delta_max must be nonnegative, got {delta_max}")
    m_rl = maps.m_rl.astype(np.float64)
    m_lr = maps.m_lr.astype(np.float64)
    width = maps.width
    total = _cycle_term(m_rl, m_lr)
    for delta in range(-delta_max, delta_max + 1):
        if delta == 0 or abs(delta) >= width:
            continue
        shifted = np.zeros_like(m_rl)
        if delta > 0:
            shifted[:, : width - delta] = m_rl[:, delta:]
        else:
            shifted[:, -delta:] = m_rl[:, : width + delta]
        total = total + _cycle_term(shifted, m_lr)
    return total.astype(np.float32)


def valid_mask(p_relaxed: Tensor, tau: float = TAU) -> ValidMask:
    """tanh(tau * p'), near 0 for occluded and near 1 for matched pixels."""
    if p_relaxed.size and p_relaxed.min() < 0:
        raise ValueRangeError("Cycle probabilities must be nonnegative")
    return ValidMask(np.tanh(tau * p_relaxed.astype(np.float64)).astype(np.float32))


def detect_occlusions(
    maps: AttentionMaps, delta_max: int = DELTA_MAX, tau: float = TAU
) -> tuple[ValidMask, ValidMask]:
    """Valid masks of the left and right views."""
    v_l = valid_mask(relaxed_cycle_probability(maps, delta_max), tau)
    v_r = valid_mask(relaxed_cycle_probability(maps.swapped(), delta_max), tau)
    return v_l, v_r


def occlusion_from_mask(v: ValidMask, threshold: float = 0.5) -> npt.NDArray[np.bool_]:
    """Pixels whose confidence falls below the threshold."""
    return np.asarray(v.values < threshold)
