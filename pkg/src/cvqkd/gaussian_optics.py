"""
Variance-level model of quadrature-encoded optical beams.

All powers are spectral variances at a single analysis frequency, normalised
to the quantum noise limit (QNL): a coherent beam has a noise floor of exactly
1 on both quadratures. Beamsplitters couple vacuum (variance 1) into the
empty port, which is the only source of added noise modelled here.
"""

# --- Imports ---
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple, Union

from .errors import DomainError

logger = logging.getLogger(__name__)

# --- Module-level Constants ---
VACUUM = 1.0
TOLERANCE = 1e-12


class Quadrature(str, Enum):
    AMPLITUDE = "amplitude"
    PHASE = "phase"


QuadratureLike = Union[Quadrature, str]


def _as_quadrature(quadrature: QuadratureLike) -> Quadrature:
    try:
        return Quadrature(quadrature)
    except ValueError as e:
        raise DomainError(f"Unknown quadrature: {quadrature!r}") from e


# --- Domain Types ---


@dataclass(frozen=True)
class QuadratureChannelState:
    """
    Noise and signal variances of a beam, per quadrature, in QNL units.

    Parameters
    ----------
    vn_plus, vn_minus : float
        Noise power on the amplitude (plus) and phase (minus) quadratures.
    vs_plus, vs_minus : float
        Signal power on the amplitude and phase quadratures.
    """

    vn_plus: float
    vn_minus: float
    vs_plus: float = 0.0
    vs_minus: float = 0.0

    def __post_init__(self) -> None:
        for name in ("vn_plus", "vn_minus", "vs_plus", "vs_minus"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def coherent(
        cls, vs_plus: float = 0.0, vs_minus: float = 0.0
    ) -> "QuadratureChannelState":
        """Return a coherent beam carrying the given signal powers."""
        return cls(VACUUM, VACUUM, vs_plus, vs_minus)

    @classmethod
    def squeezed(
        cls,
        vn: float,
        vs: float = 0.0,
        anti_squeezed: Optional[float] = None,
    ) -> "QuadratureChannelState":
        """
        Return a beam squeezed on the amplitude quadrature, carrying ``vs`` there.

        The key quadrature of a squeezed slot is always the squeezed one, so
        the amplitude label is a convention. ``anti_squeezed`` defaults to
        the minimum-uncertainty value 1/vn.
        """
        if vn <= 0:
            raise DomainError(f"Squeezed noise floor must be > 0, got {vn}")
        anti = 1.0 / vn if anti_squeezed is None else anti_squeezed
        return cls(vn_plus=vn, vn_minus=anti, vs_plus=vs, vs_minus=0.0)

    @property
    def is_coherent(self) -> bool:
        return (
            abs(self.vn_plus - VACUUM) <= TOLERANCE
            and abs(self.vn_minus - VACUUM) <= TOLERANCE
        )

    @property
    def is_physical(self) -> bool:
        """True when the noise floors satisfy the uncertainty product."""
        return self.vn_plus * self.vn_minus >= 1.0 - TOLERANCE

    def noise(self, quadrature: QuadratureLike) -> float:
        q = _as_quadrature(quadrature)
        return self.vn_plus if q is Quadrature.AMPLITUDE else self.vn_minus

    def signal(self, quadrature: QuadratureLike) -> float:
        q = _as_quadrature(quadrature)
        return self.vs_plus if q is Quadrature.AMPLITUDE else self.vs_minus


@dataclass(frozen=True)
class MeasurementPenalties:
    """
    Added-noise penalties (QNL units) paid by Eve and Bob.

    Infinite values are allowed and stand for a receiver that obtains no
    signal at all on that quadrature.
    """

    v_e_plus: float
    v_e_minus: float
    v_b_plus: float
    v_b_minus: float

    def __post_init__(self) -> None:
        for name in ("v_e_plus", "v_e_minus", "v_b_plus", "v_b_minus"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class UncertaintyCheck:
    admissible: bool
    violated: List[str] = field(default_factory=list)
    products: Tuple[float, float, float] = (0.0, 0.0, 0.0)


# --- Operations ---


def snr(state: QuadratureChannelState, quadrature: QuadratureLike) -> float:
    """
    Signal-to-noise ratio of one quadrature.

    Raises
    ------
    DomainError
        If the selected quadrature is noiseless, which no physical beam is.
    """
    noise = state.noise(quadrature)
    if noise <= 0:
        raise DomainError(
            f"Noise variance on the {_as_quadrature(quadrature).value} quadrature "
            "is zero: a noiseless channel is unphysical"
        )
    return state.signal(quadrature) / noise


def tap(
    state: QuadratureChannelState, fraction: float
) -> Tuple[QuadratureChannelState, QuadratureChannelState]:
    """
    Split a beam on a beamsplitter with vacuum on the empty port.

    Parameters
    ----------
    state : QuadratureChannelState
        The incoming beam.
    fraction : float
        Power fraction diverted to the tapped port, in [0, 1].

    Returns
    -------
    Tuple[QuadratureChannelState, QuadratureChannelState]
        ``(tapped, transmitted)``. Signal power is conserved across the two
        ports and each port picks up vacuum noise in proportion to the power
        it did not receive.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"Tap fraction must lie in [0, 1], got {fraction}")

    keep = 1.0 - fraction
    tapped = QuadratureChannelState(
        vn_plus=fraction * state.vn_plus + keep * VACUUM,
        vn_minus=fraction * state.vn_minus + keep * VACUUM,
        vs_plus=fraction * state.vs_plus,
        vs_minus=fraction * state.vs_minus,
    )
    transmitted = QuadratureChannelState(
        vn_plus=keep * state.vn_plus + fraction * VACUUM,
        vn_minus=keep * state.vn_minus + fraction * VACUUM,
        vs_plus=keep * state.vs_plus,
        vs_minus=keep * state.vs_minus,
    )
    return tapped, transmitted


def apply_loss(state: QuadratureChannelState, loss: float) -> QuadratureChannelState:
    """Attenuate a beam by ``loss``; the lost light leaves by the tapped port."""
    if not 0.0 <= loss < 1.0:
        raise DomainError(f"Loss must lie in [0, 1), got {loss}")
    if loss == 0.0:
        return replace(state)
    return tap(state, loss)[1]


def transfer(
    before: QuadratureChannelState,
    after: QuadratureChannelState,
    quadrature: QuadratureLike,
) -> float:
    """Signal transfer coefficient: output SNR over input SNR."""
    snr_in = snr(before, quadrature)
    if snr_in == 0:
        raise DomainError("Transfer coefficient is undefined for a signal-free input")
    return snr(after, quadrature) / snr_in


def simultaneous_detection(state: QuadratureChannelState) -> QuadratureChannelState:
    """
    Beam seen by each detector when both quadratures are measured at once.

    A 50:50 split is the cheapest way to read both quadratures, so each one
    arrives with half its signal-to-noise ratio on a coherent input.
    """
    return tap(state, 0.5)[0]


def penalty_from_transfer(t: float, vn: float = VACUUM) -> float:
    """
    Invert T = vn / (vn + V) for the measurement penalty V.

    T = 0 maps to an infinite penalty.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"Transfer coefficient must lie in [0, 1], got {t}")
    if t == 0.0:
        return float("inf")
    return vn * (1.0 - t) / t


def check_uncertainty(p: MeasurementPenalties) -> UncertaintyCheck:
    """
    Evaluate the three uncertainty-product constraints on the penalties.

    The constraint ids are ``"eve"`` (V_E+ V_E- >= 1), ``"bob_plus_eve_minus"``
    (V_B+ V_E- >= 1) and ``"eve_plus_bob_minus"`` (V_E+ V_B- >= 1).
    """
    products = (
        _product(p.v_e_plus, p.v_e_minus),
        _product(p.v_b_plus, p.v_e_minus),
        _product(p.v_e_plus, p.v_b_minus),
    )
    ids = ("eve", "bob_plus_eve_minus", "eve_plus_bob_minus")
    violated = [cid for cid, value in zip(ids, products) if value < 1.0 - TOLERANCE]
    if violated:
        logger.debug("Uncertainty constraints violated: %s", violated)
    return UncertaintyCheck(
        admissible=not violated, violated=violated, products=products
    )


def _product(a: float, b: float) -> float:
    # inf * 0 is a receiver with no signal against a perfect one: unconstrained.
    if (a == float("inf") and b == 0) or (b == float("inf") and a == 0):
        return float("inf")
    return a * b
