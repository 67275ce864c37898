"""
Analytic eavesdropper strategies for the coherent and squeezed schemes.

Each strategy is summarised by the signal transfer coefficients it leaves
Eve and Bob, and by the bit error rates those coefficients imply. The
intercept-resend strategies (guess, mid_quadrature) are evaluated from
their detection statistics directly.
"""

# --- Imports ---
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Tuple

from .errors import DomainError
from .gaussian_optics import (
    TOLERANCE,
    VACUUM,
    MeasurementPenalties,
    penalty_from_transfer,
)
from .infotheory import ber_from_snr

logger = logging.getLogger(__name__)


class AttackKind(str, Enum):
    NONE = "none"
    GUESS = "guess"
    MID_QUADRATURE = "mid_quadrature"
    BEAMSPLIT = "beamsplit"
    OPTIMAL_SYMMETRIC = "optimal_symmetric"
    TELEPORT = "teleport"


# --- Domain Types ---


@dataclass(frozen=True)
class TransferPair:
    """Amplitude (plus) and phase (minus) signal transfer coefficients."""

    plus: float
    minus: float

    def __post_init__(self) -> None:
        for name in ("plus", "minus"):
            value = getattr(self, name)
            if not -TOLERANCE <= value <= 1.0 + TOLERANCE:
                raise DomainError(f"Transfer coefficient {name} must lie in [0, 1]")

    @classmethod
    def symmetric(cls, t: float) -> "TransferPair":
        return cls(t, t)


@dataclass(frozen=True)
class AttackModel:
    """
    An eavesdropping strategy and its parameters.

    Use the classmethod constructors rather than filling fields by hand;
    only the parameters of the chosen kind are set.
    """

    kind: AttackKind
    fraction: Optional[float] = None
    t_e: Optional[float] = None
    gain: Optional[float] = None
    teleporter_gain: Optional[float] = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", AttackKind(self.kind))
        except ValueError as e:
            raise DomainError(f"Unknown attack kind: {self.kind!r}") from e
        if self.kind is AttackKind.BEAMSPLIT:
            if self.fraction is None or not 0.0 <= self.fraction <= 1.0:
                raise DomainError(
                    f"Tap fraction must lie in [0, 1], got {self.fraction}"
                )
        elif self.kind is AttackKind.OPTIMAL_SYMMETRIC:
            if self.t_e is None or not 0.0 < self.t_e <= 0.5:
                raise DomainError(f"T_E must lie in (0, 0.5], got {self.t_e}")
        elif self.kind is AttackKind.TELEPORT:
            if self.gain is None or self.gain < 1.0:
                raise DomainError(f"Parametric gain must be >= 1, got {self.gain}")
            if self.teleporter_gain is not None and self.teleporter_gain <= 0:
                raise DomainError(
                    f"Teleporter gain must be > 0, got {self.teleporter_gain}"
                )

    @classmethod
    def none(cls) -> "AttackModel":
        return cls(AttackKind.NONE)

    @classmethod
    def guess(cls) -> "AttackModel":
        return cls(AttackKind.GUESS)

    @classmethod
    def mid_quadrature(cls) -> "AttackModel":
        return cls(AttackKind.MID_QUADRATURE)

    @classmethod
    def beamsplit(cls, fraction: float) -> "AttackModel":
        return cls(AttackKind.BEAMSPLIT, fraction=fraction)

    @classmethod
    def optimal_symmetric(cls, t_e: float) -> "AttackModel":
        return cls(AttackKind.OPTIMAL_SYMMETRIC, t_e=t_e)

    @classmethod
    def teleport(
        cls, gain: float, teleporter_gain: Optional[float] = None
    ) -> "AttackModel":
        """Teleportation attack; ``teleporter_gain=None`` selects the optimum."""
        return cls(AttackKind.TELEPORT, gain=gain, teleporter_gain=teleporter_gain)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        return {k: v for k, v in data.items() if v is not None}


@dataclass(frozen=True)
class AttackOutcome:
    """
    Transfer coefficients and error rates left by an attack.

    ``ber_eve`` is Eve's error on the key quadrature averaged over which
    quadrature becomes key. ``penalties`` is set when the attack is defined
    through measurement penalties (teleportation).
    """

    t_eve: TransferPair
    t_bob: TransferPair
    ber_eve: float
    ber_bob: float
    penalties: Optional[MeasurementPenalties] = None

    def to_penalties(self, vn: float = VACUUM) -> MeasurementPenalties:
        """Penalties implied by the transfer coefficients on a floor of ``vn``."""
        if self.penalties is not None:
            return self.penalties
        return MeasurementPenalties(
            v_e_plus=penalty_from_transfer(self.t_eve.plus, vn),
            v_e_minus=penalty_from_transfer(self.t_eve.minus, vn),
            v_b_plus=penalty_from_transfer(self.t_bob.plus, vn),
            v_b_minus=penalty_from_transfer(self.t_bob.minus, vn),
        )


# --- Coherent Scheme ---


def coherent_attack(
    model: AttackModel, snr_in: float, line_transfer: float = 1.0
) -> AttackOutcome:
    """
    Evaluate an attack on the coherent-state scheme.

    Parameters
    ----------
    model : AttackModel
        The strategy.
    snr_in : float
        Linear SNR Alice launches on each quadrature (QNL floor).
    line_transfer : float
        Extra transfer applied to Bob's beam after Eve, e.g. ``1 - loss``.

    Returns
    -------
    AttackOutcome
        Transfer coefficients of the attack alone; error rates include
        ``line_transfer`` on Bob's side.
    """
    if snr_in <= 0:
        raise DomainError(f"Input SNR must be > 0, got {snr_in}")
    if not 0.0 < line_transfer <= 1.0:
        raise DomainError(f"Line transfer must lie in (0, 1], got {line_transfer}")

    kind = model.kind
    if kind is AttackKind.GUESS:
        return _guess_outcome(snr_in, line_transfer)
    if kind is AttackKind.MID_QUADRATURE:
        return _mid_quadrature_outcome(snr_in, line_transfer)
    if kind is AttackKind.TELEPORT:
        penalties = teleport_attack(model.gain, _teleporter_gain(model))
        t_eve = VACUUM / (VACUUM + penalties.v_e_plus)
        t_bob = VACUUM / (VACUUM + penalties.v_b_plus)
        return _transfer_outcome(t_eve, t_bob, snr_in, line_transfer, penalties)

    if kind is AttackKind.NONE:
        t_eve, t_bob = 0.0, 1.0
    elif kind is AttackKind.BEAMSPLIT:
        t_eve, t_bob = model.fraction / 2.0, 1.0 - model.fraction
    else:
        # Saturates T_E + T_B <= 1.
        t_eve, t_bob = model.t_e, 1.0 - model.t_e
    return _transfer_outcome(t_eve, t_bob, snr_in, line_transfer)


def _transfer_outcome(
    t_eve: float,
    t_bob: float,
    snr_in: float,
    line_transfer: float,
    penalties: Optional[MeasurementPenalties] = None,
) -> AttackOutcome:
    return AttackOutcome(
        t_eve=TransferPair.symmetric(t_eve),
        t_bob=TransferPair.symmetric(t_bob),
        ber_eve=ber_from_snr(t_eve * snr_in),
        ber_bob=ber_from_snr(t_bob * line_transfer * snr_in),
        penalties=penalties,
    )


def resend_error(eve_error: float, detection_error: float) -> float:
    """Error of Bob's copy when he detects a beam re-prepared from Eve's bits."""
    return eve_error * (1.0 - detection_error) + (1.0 - eve_error) * detection_error


def guess_errors(snr_in: float, line_transfer: float = 1.0) -> Tuple[float, float]:
    """
    Per-bit error rates ``(eve, bob)`` of the guessing attack.

    Eve measures one randomly chosen quadrature with an ideal homodyne and
    resends her bits. Half the time she picked the key quadrature; otherwise
    both she and Bob hold a coin flip.
    """
    b_eve = ber_from_snr(snr_in)
    b_detect = ber_from_snr(line_transfer * snr_in)
    eve = 0.5 * b_eve + 0.25
    bob = 0.5 * resend_error(b_eve, b_detect) + 0.25
    return eve, bob


def mid_quadrature_errors(
    snr_in: float, line_transfer: float = 1.0
) -> Tuple[float, float]:
    """
    Per-bit error rates ``(eve, bob)`` of the mid-quadrature attack.

    Eve homodynes at 45 degrees, where equal bit pairs sit at +-sqrt(2)
    signal amplitudes and unequal pairs sit at zero. She decides with
    thresholds at half the outer level and guesses between 01 and 10 in the
    middle, so unequal pairs are always a coin flip per bit.
    """
    inner = ber_from_snr(snr_in / 2.0)
    outer = ber_from_snr(4.5 * snr_in)
    equal_pair_error = outer + 0.5 * (inner - outer)
    eve = 0.25 + 0.5 * equal_pair_error
    bob = resend_error(eve, ber_from_snr(line_transfer * snr_in))
    return eve, bob


def _guess_outcome(snr_in: float, line_transfer: float) -> AttackOutcome:
    eve, bob = guess_errors(snr_in, line_transfer)
    # Averaged over Eve's random quadrature choice, each side keeps half.
    half = TransferPair.symmetric(0.5)
    return AttackOutcome(t_eve=half, t_bob=half, ber_eve=eve, ber_bob=bob)


def _mid_quadrature_outcome(snr_in: float, line_transfer: float) -> AttackOutcome:
    eve, bob = mid_quadrature_errors(snr_in, line_transfer)
    half = TransferPair.symmetric(0.5)
    return AttackOutcome(t_eve=half, t_bob=half, ber_eve=eve, ber_bob=bob)


# --- Squeezed Scheme ---


def _squeezed_transfer(penalty: float, floor: float, anti_other: float) -> float:
    if penalty == math.inf:
        return 0.0
    if anti_other == math.inf:
        return reduced_squeezed_transfer(penalty, floor)
    numerator = (penalty + 2.0 * anti_other) * floor
    denominator = 2.0 * floor * anti_other + penalty * (floor + anti_other)
    return numerator / denominator


def reduced_squeezed_transfer(penalty: float, floor: float) -> float:
    """Large-excess-noise transfer coefficient ``vn / (vn + penalty / 2)``."""
    if penalty == math.inf:
        return 0.0
    return floor / (floor + 0.5 * penalty)


def _check_squeezed_inputs(
    floors: Tuple[float, float], excess: Tuple[float, float]
) -> None:
    for floor, anti in zip(floors, excess):
        if floor <= 0:
            raise DomainError(f"Squeezed noise floors must be > 0, got {floors}")
        if anti * floor < 1.0 - TOLERANCE:
            raise DomainError(
                f"Anti-squeezed variance {anti} is below 1/{floor}: unphysical beam"
            )


def squeezed_transfer_eve(
    v_e: MeasurementPenalties,
    floors: Tuple[float, float],
    excess: Tuple[float, float],
) -> TransferPair:
    """
    Eve's transfer coefficients in the EPR scheme for given penalties.

    Parameters
    ----------
    v_e : MeasurementPenalties
        Only Eve's penalties are used.
    floors : Tuple[float, float]
        Squeezed noise floors ``(vn_a, vn_b)`` of the two beams.
    excess : Tuple[float, float]
        Anti-squeezed variances ``(v_anti_a, v_anti_b)``; ``math.inf`` gives
        the large-excess limit ``vn / (vn + V_E / 2)``.
    """
    _check_squeezed_inputs(floors, excess)
    vn_a, vn_b = floors
    anti_a, anti_b = excess
    return TransferPair(
        plus=_squeezed_transfer(v_e.v_e_plus, vn_a, anti_b),
        minus=_squeezed_transfer(v_e.v_e_minus, vn_b, anti_a),
    )


def squeezed_transfer_bob(
    v_b: MeasurementPenalties,
    floors: Tuple[float, float],
    excess: Tuple[float, float],
) -> TransferPair:
    """Bob's counterpart of :func:`squeezed_transfer_eve`, driven by V_B."""
    _check_squeezed_inputs(floors, excess)
    vn_a, vn_b = floors
    anti_a, anti_b = excess
    return TransferPair(
        plus=_squeezed_transfer(v_b.v_b_plus, vn_a, anti_b),
        minus=_squeezed_transfer(v_b.v_b_minus, vn_b, anti_a),
    )


def squeezed_eve_bound(vn: float) -> float:
    """Largest transfer Eve can obtain from a beam squeezed to ``vn``."""
    if vn <= 0:
        raise DomainError(f"Squeezed noise floor must be > 0, got {vn}")
    return 2.0 * vn / (2.0 * vn + 1.0)


def squeezed_bounds(vn: float, t_e: float) -> float:
    """
    Bob's maximum transfer coefficient when Eve takes ``t_e``.

    Bob's and Eve's transfers are tied by
    ``T_E T_B / ((1 - T_E)(1 - T_B)) = 4 vn``.

    Raises
    ------
    DomainError
        If ``t_e`` exceeds Eve's bound: such an attack is impossible.
    """
    if not 0.0 < vn <= 1.0:
        raise DomainError(f"Squeezed noise floor must lie in (0, 1], got {vn}")
    bound = squeezed_eve_bound(vn)
    if not 0.0 < t_e <= bound + TOLERANCE:
        raise DomainError(
            f"T_E = {t_e} is outside Eve's admissible range (0, {bound:.6g}] "
            f"at vn = {vn}"
        )
    x = 4.0 * vn * (1.0 - t_e) / t_e
    return x / (1.0 + x)


def lost_port_gain(vn: float) -> float:
    """Odds gain ``4 / (vn (1 + 3 vn))`` of Eve's optimal use of a lost port."""
    if not 0.0 < vn <= 1.0:
        raise DomainError(f"Squeezed noise floor must lie in (0, 1], got {vn}")
    return 4.0 / (vn * (1.0 + 3.0 * vn))


def squeezed_lost_port_eve(vn: float, t_tap: float) -> float:
    """
    Eve's transfer when she plays the optimal symmetric strategy on a lost port.

    ``t_tap`` is the port's own transfer under plain homodyne detection.
    Eve's strategy multiplies its odds ``T / (1 - T)`` by
    :func:`lost_port_gain`. On a lossy line Bob's and Eve's odds then
    multiply to ``4 vn / (1 + 3 vn)``: the squeezed frontier constant
    ``4 vn`` under strong squeezing and the coherent ``T_E + T_B = 1`` at
    ``vn = 1``, where the gain is 1. Eve's no-loss cap is not applied.
    """
    if not 0.0 <= t_tap <= 1.0:
        raise DomainError(f"Lost-port transfer must lie in [0, 1], got {t_tap}")
    gain = lost_port_gain(vn)
    if t_tap == 1.0:
        return 1.0
    odds = gain * t_tap / (1.0 - t_tap)
    return odds / (1.0 + odds)


def squeezed_attack(
    model: AttackModel, vn: float, snr_in: float, line_transfer: float = 1.0
) -> AttackOutcome:
    """
    Evaluate an attack on the squeezed scheme with noise floor ``vn``.

    ``snr_in`` is measured against the sub-QNL floor. An unsqueezed beam
    (``vn >= 1``) is the coherent scheme and is delegated to
    :func:`coherent_attack`. Only the optimal symmetric, guessing and
    teleportation attacks have a squeezed-scheme model.
    """
    if vn >= 1.0:
        return coherent_attack(model, snr_in, line_transfer)
    if snr_in <= 0:
        raise DomainError(f"Input SNR must be > 0, got {snr_in}")
    if not 0.0 < line_transfer <= 1.0:
        raise DomainError(f"Line transfer must lie in (0, 1], got {line_transfer}")

    kind = model.kind
    if kind is AttackKind.NONE:
        return _transfer_outcome(0.0, 1.0, snr_in, line_transfer)
    if kind is AttackKind.OPTIMAL_SYMMETRIC:
        t_bob = squeezed_bounds(vn, model.t_e)
        return _transfer_outcome(model.t_e, t_bob, snr_in, line_transfer)
    if kind is AttackKind.GUESS:
        return _guess_outcome(snr_in, line_transfer)
    if kind is AttackKind.TELEPORT:
        penalties = teleport_attack(model.gain, _teleporter_gain(model))
        t_eve = reduced_squeezed_transfer(penalties.v_e_plus, vn)
        t_bob = reduced_squeezed_transfer(penalties.v_b_plus, vn)
        return _transfer_outcome(t_eve, t_bob, snr_in, line_transfer, penalties)
    raise DomainError(
        f"The {kind.value} attack is not modelled for the squeezed scheme"
    )


# --- Teleportation ---


def teleport_attack(G: float, lam: float) -> MeasurementPenalties:
    """
    Penalties of a teleportation attack.

    Eve reads the teleporter's classical channel, paying ``2G - 1``; Bob
    receives the teleported beam. ``lam = math.inf`` is the limit in which
    Bob's penalty also tends to ``2G - 1``.

    Parameters
    ----------
    G : float
        Parametric gain of the EPR source, >= 1.
    lam : float
        Teleporter gain, > 0.
    """
    if G < 1.0:
        raise DomainError(f"Parametric gain must be >= 1, got {G}")
    if not lam > 0:
        raise DomainError(f"Teleporter gain must be > 0, got {lam}")

    v_eve = 2.0 * G - 1.0
    if lam == math.inf:
        v_bob = v_eve
    else:
        root_g, root_g1 = math.sqrt(G), math.sqrt(G - 1.0)
        v_bob = ((lam * root_g - root_g1) ** 2 + (root_g - lam * root_g1) ** 2) / lam**2
    return MeasurementPenalties(v_eve, v_eve, v_bob, v_bob)


def lambda_opt(G: float) -> float:
    """
    Teleporter gain that minimises Bob's penalty for parametric gain ``G``.

    Raises
    ------
    DomainError
        For ``G <= 1``, where the optimum diverges (the ``lam -> inf`` limit).
    """
    if G <= 1.0:
        raise DomainError(
            f"lambda_opt requires G > 1 (got {G}); at G = 1 the optimum diverges "
            "and the lam -> inf limit applies"
        )
    # (sqrt(G) - sqrt(G-1))^2 written without the cancellation.
    v_sq = 1.0 / (math.sqrt(G) + math.sqrt(G - 1.0)) ** 2
    return (1.0 + v_sq**2) / (1.0 - v_sq**2)


def _teleporter_gain(model: AttackModel) -> float:
    if model.teleporter_gain is not None:
        return model.teleporter_gain
    if model.gain == 1.0:
        return math.inf
    return lambda_opt(model.gain)
