"""
Seedable Monte-Carlo engine for the bit-level protocol.

Each slot carries two of Alice's bits, one per quadrature, as binary
pulse-code modulation. Noise is drawn in chunks; chunk ``k`` always uses the
substream ``SeedSequence([seed, k])``, so results do not depend on how many
worker threads simulate the chunks.

Soft values are normalised to unit noise: a bit read with transfer
coefficient T has mean ``+-sqrt(T * snr_in) / 2``, which makes the error
rate of a threshold detector at 0 equal to ``ber_from_snr(T * snr_in)``.
"""

# --- Imports ---
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .attacks import (
    AttackKind,
    AttackModel,
    AttackOutcome,
    coherent_attack,
    squeezed_attack,
)
from .config import ProtocolConfig
from .errors import DomainError, InsecureError, PrivacyAmplificationError
from .gaussian_optics import Quadrature, tap, transfer
from .infotheory import ber_from_snr, eve_mi_after_pa
from .keyrate import key_efficiency

logger = logging.getLogger(__name__)

# --- Module-level Constants ---
CHUNK_SIZE = 1 << 16
DISCLOSURE_STREAM = 1 << 40
RECONCILE_STREAM = DISCLOSURE_STREAM + 1
AMPLIFY_STREAM = DISCLOSURE_STREAM + 2
AUDIT_SIZE = 1000
PA_ATTEMPTS = 5
PA_REPAIR_SWEEPS = 50


# --- Domain Types ---


@dataclass(frozen=True, eq=False)
class BitString:
    """An immutable string of bits backed by a uint8 array."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.bits, dtype=np.uint8, copy=True).ravel()
        if arr.size and arr.max() > 1:
            raise DomainError("A BitString may only contain 0 and 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    @property
    def length(self) -> int:
        return len(self)

    def error_rate(self, other: "BitString") -> float:
        """Fraction of positions where the two strings differ."""
        if len(self) != len(other):
            raise DomainError("Cannot compare BitStrings of different lengths")
        if not len(self):
            return 0.0
        return float(np.mean(self.bits != other.bits))


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    alice_bits: Tuple[int, int]
    bob_quadrature: Quadrature
    bob_soft_value: float
    bob_bit: int
    eve_soft_values: Tuple[float, float]
    eve_bits: Tuple[int, int]
    alice_quadrature: Optional[Quadrature] = None
    sifted: bool = True
    disclosed: bool = False


@dataclass(frozen=True)
class ReconcileStats:
    rounds_used: int
    lengths: List[int]
    kept_fractions: List[float]
    residual_ber_bob: float
    residual_ber_eve: float
    pairs: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RunStats:
    """
    Empirical statistics of one protocol run.

    Standard errors are binomial, ``sqrt(p (1 - p) / N)``. Rates that are
    undefined for a run (no sifted slots, aborted runs) are ``None``.
    """

    scheme: str
    attack: Dict[str, object]
    seed: int
    n_slots: int
    n_sifted: int
    sifted_fraction: float
    sifted_fraction_se: float
    empirical_ber_bob: Optional[float]
    se_bob: Optional[float]
    empirical_ber_eve: Optional[float]
    se_eve: Optional[float]
    analytic_ber_bob: float
    analytic_ber_eve: float
    disclosed_ber: Optional[float]
    aborted: bool
    reconciliation_rounds_used: int = 0
    post_recon_lengths: List[int] = field(default_factory=list)
    residual_ber_bob: Optional[float] = None
    residual_ber_eve: Optional[float] = None
    eve_pair_error_correlation: Optional[float] = None
    pa_block_n: Optional[int] = None
    post_pa_lengths: List[int] = field(default_factory=list)
    empirical_eve_mi: Optional[float] = None
    predicted_eve_mi: Optional[float] = None
    penalty_product: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class KeyMaterial:
    """Per-slot arrays of a run plus the keys left after post-processing."""

    slot: np.ndarray
    alice_bits: np.ndarray
    bob_choice: np.ndarray
    bob_soft: np.ndarray
    bob_bits: np.ndarray
    eve_soft: np.ndarray
    eve_bits: np.ndarray
    alice_choice: Optional[np.ndarray]
    sifted: np.ndarray
    disclosed: np.ndarray
    reconciled: Optional[Tuple[BitString, BitString, BitString]] = None
    amplified: Optional[Tuple[BitString, BitString, BitString]] = None


@dataclass(frozen=True)
class _ChannelPlan:
    kind: AttackKind
    mu_bob: float
    mu_eve: float
    mu_full: float
    mu_detect: float


# --- Slot Simulation ---


def _mean(transfer_coefficient: float, snr_in: float) -> float:
    return math.sqrt(max(transfer_coefficient, 0.0) * snr_in) / 2.0


def _plan(
    config: ProtocolConfig, attack: AttackModel
) -> Tuple[_ChannelPlan, AttackOutcome]:
    snr_in = config.input_snr
    line = config.line_transfer()
    if config.is_squeezed:
        outcome = squeezed_attack(attack, config.vn, snr_in, line)
    else:
        outcome = coherent_attack(attack, snr_in, line)

    t_eve = outcome.t_eve.plus
    analytic_eve = outcome.ber_eve
    if attack.kind is AttackKind.NONE and config.loss > 0:
        # Unattacked line: the lost light is Eve's.
        launched = config.channel_state()
        t_eve = transfer(launched, tap(launched, config.loss)[0], "amplitude")
        analytic_eve = ber_from_snr(t_eve * snr_in)

    plan = _ChannelPlan(
        kind=attack.kind,
        mu_bob=_mean(outcome.t_bob.plus * line, snr_in),
        mu_eve=_mean(t_eve, snr_in),
        mu_full=_mean(1.0, snr_in),
        mu_detect=_mean(line, snr_in),
    )
    outcome = AttackOutcome(
        t_eve=outcome.t_eve,
        t_bob=outcome.t_bob,
        ber_eve=analytic_eve,
        ber_bob=outcome.ber_bob,
        penalties=outcome.penalties,
    )
    return plan, outcome


def _simulate_chunk(
    plan: _ChannelPlan, seed: int, chunk: int, count: int
) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    # Draw order is fixed so every attack consumes the substream identically.
    alice = rng.integers(0, 2, size=(count, 2), dtype=np.uint8)
    bob_choice = rng.integers(0, 2, size=count, dtype=np.uint8)
    alice_choice = rng.integers(0, 2, size=count, dtype=np.uint8)
    eve_choice = rng.integers(0, 2, size=count, dtype=np.uint8)
    coin = rng.integers(0, 2, size=count, dtype=np.uint8)
    noise_bob = rng.standard_normal(count)
    noise_eve = rng.standard_normal((count, 2))

    rows = np.arange(count)
    sign = 2.0 * alice - 1.0

    if plan.kind is AttackKind.GUESS:
        eve_soft = noise_eve.copy()
        eve_soft[rows, eve_choice] += sign[rows, eve_choice] * plan.mu_full
        eve_bits = (eve_soft > 0).astype(np.uint8)
        bob_soft = _resend(eve_bits, bob_choice, rows, plan.mu_detect, noise_bob)
    elif plan.kind is AttackKind.MID_QUADRATURE:
        level = math.sqrt(2.0) * plan.mu_full
        x = (sign[:, 0] + sign[:, 1]) / math.sqrt(2.0) * plan.mu_full + noise_eve[:, 0]
        upper = x > level / 2.0
        lower = x < -level / 2.0
        middle = ~(upper | lower)
        eve_bits = np.empty((count, 2), dtype=np.uint8)
        eve_bits[upper] = 1
        eve_bits[lower] = 0
        eve_bits[middle, 0] = coin[middle]
        eve_bits[middle, 1] = 1 - coin[middle]
        eve_soft = np.column_stack([x, x])
        bob_soft = _resend(eve_bits, bob_choice, rows, plan.mu_detect, noise_bob)
    else:
        bob_soft = sign[rows, bob_choice] * plan.mu_bob + noise_bob
        eve_soft = sign * plan.mu_eve + noise_eve
        eve_bits = (eve_soft > 0).astype(np.uint8)

    return {
        "alice": alice,
        "bob_choice": bob_choice,
        "alice_choice": alice_choice,
        "bob_soft": bob_soft,
        "bob_bits": (bob_soft > 0).astype(np.uint8),
        "eve_soft": eve_soft,
        "eve_bits": eve_bits,
    }


def _resend(
    eve_bits: np.ndarray,
    bob_choice: np.ndarray,
    rows: np.ndarray,
    mu: float,
    noise: np.ndarray,
) -> np.ndarray:
    resent = 2.0 * eve_bits[rows, bob_choice] - 1.0
    return resent * mu + noise


def _simulate_slots(
    plan: _ChannelPlan, n_slots: int, seed: int, workers: int
) -> Dict[str, np.ndarray]:
    chunks = [
        (index, min(CHUNK_SIZE, n_slots - start))
        for index, start in enumerate(range(0, n_slots, CHUNK_SIZE))
    ]

    def run(bounds: Tuple[int, int]) -> Dict[str, np.ndarray]:
        return _simulate_chunk(plan, seed, *bounds)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(bounds) for bounds in chunks]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


# --- Protocol ---


def _rate(errors: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    if errors.size == 0:
        return None, None
    p = float(np.mean(errors))
    return p, math.sqrt(p * (1.0 - p) / errors.size)


def run_protocol(
    config: ProtocolConfig,
    attack: AttackModel,
    n_slots: Optional[int] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> Tuple[RunStats, KeyMaterial]:
    """
    Simulate the protocol end to end.

    Parameters
    ----------
    config : ProtocolConfig
        Scheme, calibration, loss, thresholds and reconciliation rounds.
    attack : AttackModel
        Eve's strategy. With no attack the lost light of a lossy line is
        handed to Eve.
    n_slots, seed : int, optional
        Override the config's Monte-Carlo size and seed.
    workers : int
        Threads used to simulate slot chunks; does not change the output.

    Returns
    -------
    Tuple[RunStats, KeyMaterial]
        Statistics and the sifted per-slot arrays with the post-processed keys.
    """
    n_slots = config.n_slots if n_slots is None else n_slots
    seed = config.seed if seed is None else seed
    if n_slots < 1:
        raise DomainError(f"n_slots must be >= 1, got {n_slots}")

    plan, outcome = _plan(config, attack)
    logger.info(
        "Simulating %d slots (%s, attack=%s, seed=%d)",
        n_slots,
        config.scheme,
        attack.kind.value,
        seed,
    )
    raw = _simulate_slots(plan, n_slots, seed, max(1, workers))

    # --- Sifting ---
    if config.is_squeezed:
        sifted_mask = raw["alice_choice"] == raw["bob_choice"]
    else:
        sifted_mask = np.ones(n_slots, dtype=bool)
    sifted = np.flatnonzero(sifted_mask)
    n_sifted = int(sifted.size)
    fraction = n_sifted / n_slots
    fraction_se = math.sqrt(0.25 / n_slots) if config.is_squeezed else 0.0

    choice = raw["bob_choice"][sifted]
    alice_key = raw["alice"][sifted, choice]
    bob_key = raw["bob_bits"][sifted]
    eve_key = raw["eve_bits"][sifted, choice]

    ber_bob, se_bob = _rate(alice_key != bob_key)
    ber_eve, se_eve = _rate(alice_key != eve_key)

    # --- Test subset ---
    disclosure_rng = np.random.default_rng(
        np.random.SeedSequence([seed, DISCLOSURE_STREAM])
    )
    disclosed = np.zeros(n_sifted, dtype=bool)
    disclosed[disclosure_rng.permutation(n_sifted)[: n_sifted // 2]] = True
    disclosed_ber, _ = _rate(alice_key[disclosed] != bob_key[disclosed])
    aborted = disclosed_ber is None or disclosed_ber > config.bob_threshold
    if aborted:
        logger.warning(
            "Disclosed error rate %s exceeds the cutoff %.6g: run aborted",
            disclosed_ber,
            config.bob_threshold,
        )

    disclosed_full = np.zeros(n_slots, dtype=bool)
    disclosed_full[sifted[disclosed]] = True
    penalty_product = None
    if outcome.penalties is not None:
        penalty_product = outcome.penalties.v_e_plus * outcome.penalties.v_b_plus

    stats = dict(
        scheme=config.scheme,
        attack=attack.to_dict(),
        seed=seed,
        n_slots=n_slots,
        n_sifted=n_sifted,
        sifted_fraction=fraction,
        sifted_fraction_se=fraction_se,
        empirical_ber_bob=ber_bob,
        se_bob=se_bob,
        empirical_ber_eve=ber_eve,
        se_eve=se_eve,
        analytic_ber_bob=outcome.ber_bob,
        analytic_ber_eve=outcome.ber_eve,
        disclosed_ber=disclosed_ber,
        aborted=aborted,
        penalty_product=penalty_product,
    )
    material = dict(
        slot=np.arange(n_slots),
        alice_bits=raw["alice"],
        bob_choice=raw["bob_choice"],
        bob_soft=raw["bob_soft"],
        bob_bits=raw["bob_bits"],
        eve_soft=raw["eve_soft"],
        eve_bits=raw["eve_bits"],
        alice_choice=raw["alice_choice"] if config.is_squeezed else None,
        sifted=sifted_mask,
        disclosed=disclosed_full,
    )
    if aborted:
        return RunStats(**stats), KeyMaterial(**material)

    # --- Post-processing ---
    keep = ~disclosed
    alice_s = BitString(alice_key[keep])
    bob_s = BitString(bob_key[keep])
    eve_s = BitString(eve_key[keep])

    alice_r, bob_r, eve_r, recon = reconcile(
        alice_s,
        bob_s,
        eve_s,
        config.reconciliation_rounds,
        _derive(seed, RECONCILE_STREAM),
    )
    stats.update(
        reconciliation_rounds_used=recon.rounds_used,
        post_recon_lengths=recon.lengths,
        residual_ber_bob=recon.residual_ber_bob,
        residual_ber_eve=recon.residual_ber_eve,
        eve_pair_error_correlation=_pair_error_correlation(alice_r, eve_r, recon.pairs),
    )
    material["reconciled"] = (alice_r, bob_r, eve_r)

    try:
        n = key_efficiency(config).pa_block_n
    except InsecureError as e:
        logger.warning("Privacy amplification skipped: %s", e)
        return RunStats(**stats), KeyMaterial(**material)
    if len(alice_r) < n:
        logger.warning(
            "Reconciled key of %d bits is shorter than n=%d", len(alice_r), n
        )
        return RunStats(**stats), KeyMaterial(**material)

    pa_seed = _derive(seed, AMPLIFY_STREAM)
    amplified = tuple(
        privacy_amplify(s, n, pa_seed, recon.pairs) for s in (alice_r, bob_r, eve_r)
    )
    eve_block_error = amplified[0].error_rate(amplified[2])
    stats.update(
        pa_block_n=n,
        post_pa_lengths=[len(amplified[0])],
        empirical_eve_mi=1.0 - 2.0 * eve_block_error,
        predicted_eve_mi=eve_mi_after_pa(min(recon.residual_ber_eve, 0.5), n),
    )
    material["amplified"] = amplified
    return RunStats(**stats), KeyMaterial(**material)


def _derive(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def _pair_error_correlation(
    alice: BitString, eve: BitString, pairs: np.ndarray
) -> Optional[float]:
    """Correlation of Eve's errors on the two members of surviving pairs."""
    if pairs.size == 0:
        return None
    errors = (alice.bits != eve.bits).astype(float)
    first, second = errors[pairs[:, 0]], errors[pairs[:, 1]]
    if first.std() == 0 or second.std() == 0:
        return None
    return float(np.corrcoef(first, second)[0, 1])


# --- Reconciliation ---


def reconcile(
    alice: BitString, bob: BitString, eve: BitString, rounds: int, seed: int
) -> Tuple[BitString, BitString, BitString, ReconcileStats]:
    """
    Parity-check reconciliation on random pairs.

    Each round pairs the surviving positions at random, compares Alice's and
    Bob's pair parities and drops both bits of every disagreeing pair; Eve
    applies the same discards. A round only runs if a random audit of up to
    1000 positions still finds a mismatch.

    Returns
    -------
    Tuple[BitString, BitString, BitString, ReconcileStats]
        The reconciled strings and the round statistics. ``stats.pairs``
        holds the surviving checked pairs as positions in the output strings.
    """
    if not len(alice) == len(bob) == len(eve):
        raise DomainError(
            f"Strings differ in length: {len(alice)}, {len(bob)}, {len(eve)}"
        )
    if rounds < 0:
        raise DomainError(f"rounds must be >= 0, got {rounds}")

    rng = np.random.default_rng(seed)
    a, b, e = alice.bits, bob.bits, eve.bits
    ids = np.arange(len(a))
    pair_log: List[np.ndarray] = []
    lengths: List[int] = []
    kept_fractions: List[float] = []

    for round_index in range(rounds):
        size = len(a)
        if size < 2:
            break
        audit = rng.choice(size, size=min(AUDIT_SIZE, size), replace=False)
        if not np.any(a[audit] != b[audit]):
            logger.debug("Audit clean before round %d", round_index + 1)
            break

        order = rng.permutation(size)
        half = size // 2
        first, second = order[: 2 * half : 2], order[1 : 2 * half : 2]
        mismatch = (a[first] ^ a[second]) != (b[first] ^ b[second])

        keep = np.ones(size, dtype=bool)
        keep[first[mismatch]] = False
        keep[second[mismatch]] = False
        pair_log.append(
            np.column_stack([ids[first[~mismatch]], ids[second[~mismatch]]])
        )

        a, b, e, ids = a[keep], b[keep], e[keep], ids[keep]
        lengths.append(int(len(a)))
        kept_fractions.append(float(np.count_nonzero(~mismatch)) / half)
        logger.debug(
            "Round %d: kept %d of %d bits", round_index + 1, len(a), size
        )

    position = np.full(len(alice), -1, dtype=np.int64)
    position[ids] = np.arange(len(ids))
    if pair_log:
        logged = position[np.concatenate(pair_log)]
        pairs = logged[(logged >= 0).all(axis=1)]
    else:
        pairs = np.empty((0, 2), dtype=np.int64)

    out_a, out_b, out_e = BitString(a), BitString(b), BitString(e)
    stats = ReconcileStats(
        rounds_used=len(lengths),
        lengths=lengths,
        kept_fractions=kept_fractions,
        residual_ber_bob=out_a.error_rate(out_b),
        residual_ber_eve=out_a.error_rate(out_e),
        pairs=pairs,
    )
    return out_a, out_b, out_e, stats


# --- Privacy Amplification ---


def privacy_amplify(
    key: BitString,
    n: int,
    seed: int,
    exclusions: Optional[np.ndarray] = None,
) -> BitString:
    """
    Replace each random n-bit block of the key by its parity.

    Parameters
    ----------
    key : BitString
        The reconciled key.
    n : int
        Block length.
    seed : int
        Seed of the block assignment. The assignment depends only on the
        seed, key length, n and exclusions, so Alice, Bob and Eve applying
        the same arguments use identical blocks.
    exclusions : numpy.ndarray, optional
        ``(k, 2)`` position pairs that must not share a block.

    Returns
    -------
    BitString
        ``len(key) // n`` amplified bits.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"Block length must be an integer >= 1, got {n}")
    if len(key) < n:
        raise DomainError(f"Key of {len(key)} bits is shorter than a block of {n}")
    if n == 1:
        return BitString(key.bits)

    blocks = assign_blocks(len(key), n, seed, exclusions)
    return BitString(np.bitwise_xor.reduce(key.bits[blocks], axis=1))


def assign_blocks(
    size: int, n: int, seed: int, exclusions: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Draw the privacy-amplification blocks for a key of ``size`` bits.

    Returns
    -------
    numpy.ndarray
        ``(size // n, n)`` key positions, one row per block, with no row
        holding both positions of an exclusion pair.

    Raises
    ------
    PrivacyAmplificationError
        If every attempt leaves a pair inside one block.
    """
    if int(n) != n or n < 1 or size < n:
        raise DomainError(f"Cannot split {size} bits into blocks of {n}")
    if exclusions is None:
        pairs = np.empty((0, 2), dtype=np.int64)
    else:
        pairs = np.asarray(exclusions)
    rng = np.random.default_rng(seed)
    for attempt in range(PA_ATTEMPTS):
        order = _draw_order(rng, size, n, pairs)
        if order is not None:
            break
        logger.info("Block assignment attempt %d failed; retrying", attempt + 1)
    else:
        raise PrivacyAmplificationError(
            f"No block assignment of length {n} avoids the reconciliation pairs "
            f"after {PA_ATTEMPTS} attempts"
        )

    blocks = size // n
    return order[: blocks * n].reshape(blocks, n)


def _draw_order(
    rng: np.random.Generator, size: int, n: int, pairs: np.ndarray
) -> Optional[np.ndarray]:
    """A permutation whose first ``size // n * n`` slots form the blocks."""
    order = rng.permutation(size)
    if pairs.size == 0:
        return order

    limit = (size // n) * n
    slot_of = np.empty(size, dtype=np.int64)
    slot_of[order] = np.arange(size)
    for _ in range(PA_REPAIR_SWEEPS):
        block = np.where(slot_of < limit, slot_of // n, -1)
        first, second = block[pairs[:, 0]], block[pairs[:, 1]]
        clashes = np.flatnonzero((first == second) & (first >= 0))
        if clashes.size == 0:
            return order
        for k in clashes:
            moved = pairs[k, 1]
            here = slot_of[moved]
            there = int(rng.integers(size))
            other = order[there]
            order[here], order[there] = other, moved
            slot_of[moved], slot_of[other] = there, here
    return None


# --- Slot Records ---


def iter_slot_records(material: KeyMaterial) -> Iterator[SlotRecord]:
    """Yield one :class:`SlotRecord` per simulated slot."""
    quadratures = (Quadrature.AMPLITUDE, Quadrature.PHASE)
    for i in range(material.slot.size):
        alice_q = None
        if material.alice_choice is not None:
            alice_q = quadratures[int(material.alice_choice[i])]
        yield SlotRecord(
            slot=int(material.slot[i]),
            alice_bits=(int(material.alice_bits[i, 0]), int(material.alice_bits[i, 1])),
            bob_quadrature=quadratures[int(material.bob_choice[i])],
            bob_soft_value=float(material.bob_soft[i]),
            bob_bit=int(material.bob_bits[i]),
            eve_soft_values=(
                float(material.eve_soft[i, 0]),
                float(material.eve_soft[i, 1]),
            ),
            eve_bits=(int(material.eve_bits[i, 0]), int(material.eve_bits[i, 1])),
            alice_quadrature=alice_q,
            sifted=bool(material.sifted[i]),
            disclosed=bool(material.disclosed[i]),
        )
