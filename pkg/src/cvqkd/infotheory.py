"""
Classical-information layer: BER/SNR conversion, entropies, mutual
information and the privacy-amplification algebra of block parities.

Error probabilities live in [0, 0.5]; 0.5 is a completely random string.
"""

# --- Imports ---
import logging
import math
from typing import Union

import numpy as np
from scipy import special, stats

from .errors import DomainError, UnreachableError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# --- BER <-> SNR ---


def ber_from_snr(snr: ArrayLike) -> ArrayLike:
    """
    Bit error rate of binary quadrature modulation read by a threshold detector.

    Parameters
    ----------
    snr : float or numpy.ndarray
        Linear signal-to-noise ratio(s), >= 0.

    Returns
    -------
    float or numpy.ndarray
        ``0.5 * erfc(0.5 * sqrt(snr / 2))``; 0.5 at zero SNR.
    """
    values = np.asarray(snr, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise DomainError(f"SNR must be >= 0, got {snr}")
    ber = 0.5 * special.erfc(0.5 * np.sqrt(values / 2.0))
    return float(ber) if ber.ndim == 0 else ber


def snr_for_ber(target: float) -> float:
    """
    Linear SNR at which :func:`ber_from_snr` returns ``target``.

    Uses the exact inverse ``8 * erfcinv(2 * target) ** 2``.
    """
    if not 0.0 < target < 0.5:
        raise DomainError(f"Target BER must lie in (0, 0.5), got {target}")
    return float(8.0 * special.erfcinv(2.0 * target) ** 2)


# --- Entropy and Mutual Information ---


def binary_entropy(p: float) -> float:
    """Shannon entropy in bits of a Bernoulli(p) variable, with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Probability must lie in [0, 1], got {p}")
    return float((special.entr(p) + special.entr(1.0 - p)) / math.log(2.0))


def joint_entropy(b: float) -> float:
    """
    Joint entropy H(x, y) of two uniform bits that disagree with probability b.

    The four joint outcomes carry probabilities (1 - b)/2 and b/2 twice each,
    which sums to 1 + h(b).
    """
    _check_error_probability(b)
    probs = np.array([(1 - b) / 2, (1 - b) / 2, b / 2, b / 2])
    return float(special.entr(probs).sum() / math.log(2.0))


def mutual_info_from_ber(b: float) -> float:
    """
    Mutual information, in bits per symbol, of a binary symmetric channel.

    Computed as H(x) + H(y) - H(x, y) with uniform marginals, which equals
    ``1 - binary_entropy(b)``.
    """
    return max(0.0, 2.0 - joint_entropy(b))


# --- Privacy Amplification ---


def pa_error(b: float, n: int) -> float:
    """
    Probability that the modulo-2 sum of an n-bit block is wrong.

    Parameters
    ----------
    b : float
        Per-bit error probability of the string, in [0, 0.5].
    n : int
        Block length, >= 1.

    Returns
    -------
    float
        ``(1 - (1 - 2b) ** n) / 2``: an odd number of errors flips the parity.
    """
    _check_error_probability(b)
    _check_block_length(n)
    return (1.0 - (1.0 - 2.0 * b) ** n) / 2.0


def pa_error_binomial(b: float, n: int) -> float:
    """Block parity error by explicit summation over even error counts."""
    _check_error_probability(b)
    _check_block_length(n)
    even = np.arange(0, n + 1, 2)
    return float(1.0 - stats.binom.pmf(even, n, b).sum())


def eve_mi_after_pa(b_eve: float, n: int) -> float:
    """Eve's residual mutual information per amplified bit, ``(1 - 2 b_eve) ** n``."""
    _check_error_probability(b_eve)
    _check_block_length(n)
    return (1.0 - 2.0 * b_eve) ** n


def min_block_length(b_eve: float, target_mi: float) -> int:
    """
    Smallest block length that pushes Eve's mutual information to ``target_mi``.

    Raises
    ------
    UnreachableError
        If Eve's string is error-free; no amount of block summing helps then.
    """
    _check_error_probability(b_eve)
    if not 0.0 < target_mi < 1.0:
        raise DomainError(
            f"Target mutual information must lie in (0, 1), got {target_mi}"
        )
    if b_eve == 0.0:
        raise UnreachableError(
            "Eve holds an error-free copy of the key: no finite block length "
            "reduces her information"
        )
    if b_eve == 0.5:
        return 1

    n = max(1, math.ceil(math.log(target_mi) / math.log(1.0 - 2.0 * b_eve)))
    # Guard the ceil against rounding on either side of an exact power.
    while n > 1 and eve_mi_after_pa(b_eve, n - 1) <= target_mi:
        n -= 1
    while eve_mi_after_pa(b_eve, n) > target_mi:
        n += 1
    logger.debug("min_block_length(%.6f, %g) = %d", b_eve, target_mi, n)
    return n


# --- Validation Helpers ---


def _check_error_probability(b: float) -> None:
    if not 0.0 <= b <= 0.5:
        raise DomainError(f"Error probability must lie in [0, 0.5], got {b}")


def _check_block_length(n: int) -> None:
    if int(n) != n or n < 1:
        raise DomainError(f"Block length must be an integer >= 1, got {n}")
