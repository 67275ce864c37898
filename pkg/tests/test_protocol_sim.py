import math

import numpy as np
import pytest

from src.cvqkd.attacks import AttackModel
from src.cvqkd.config import load_config
from src.cvqkd.errors import DomainError, PrivacyAmplificationError
from src.cvqkd.gaussian_optics import Quadrature
from src.cvqkd.infotheory import pa_error
from src.cvqkd.protocol_sim import (
    BitString,
    assign_blocks,
    iter_slot_records,
    privacy_amplify,
    reconcile,
    run_protocol,
)


def _within(empirical, expected, se, k=3.0):
    """True when empirical lies within k standard errors of expected."""
    return abs(empirical - expected) <= k * se


def _noisy_copy(bits, rate, seed):
    """Flip each bit with probability ``rate``."""
    rng = np.random.default_rng(seed)
    flips = (rng.random(bits.size) < rate).astype(np.uint8)
    return bits ^ flips


# --- Tests for BitString ---


def test_bitstring_rejects_non_bits():
    """Test that values other than 0 and 1 raise DomainError."""
    with pytest.raises(DomainError):
        BitString(np.array([0, 1, 2]))


def test_bitstring_is_read_only():
    """Test that the backing array cannot be modified."""
    key = BitString([0, 1, 1])
    with pytest.raises(ValueError):
        key.bits[0] = 1
    assert key.length == 3


def test_bitstring_error_rate():
    """Test the fraction of differing positions."""
    assert BitString([0, 1, 1, 0]).error_rate(BitString([0, 0, 1, 1])) == 0.5
    with pytest.raises(DomainError):
        BitString([0]).error_rate(BitString([0, 1]))


# --- Tests for run_protocol ---


def test_unattacked_run_matches_calibration(config_13db):
    """Test Bob sees the 1% base rate and Eve sees coin flips."""
    stats, material = run_protocol(config_13db, AttackModel.none(), 1_000_000, 7)
    assert stats.n_sifted == 1_000_000
    assert stats.sifted_fraction == 1.0
    assert _within(stats.empirical_ber_bob, 0.01, stats.se_bob)
    assert _within(stats.empirical_ber_eve, 0.5, stats.se_eve)
    assert not stats.aborted
    assert stats.pa_block_n == 40
    reconciled_length = len(material.reconciled[0])
    assert stats.post_pa_lengths == [reconciled_length // 40]
    assert stats.residual_ber_bob < 1e-3
    assert int(material.disclosed.sum()) == 500_000


def test_run_is_deterministic(config_13db):
    """Test that the same config, attack and seed reproduce every output."""
    attack = AttackModel.optimal_symmetric(0.08)
    first, key_a = run_protocol(config_13db, attack, 50000, 11)
    second, key_b = run_protocol(config_13db, attack, 50000, 11)
    assert first.to_dict() == second.to_dict()
    assert key_a.amplified == key_b.amplified


def test_worker_count_does_not_change_results(config_13db):
    """Test that threaded chunk simulation matches the serial run."""
    attack = AttackModel.beamsplit(0.16)
    serial, _ = run_protocol(config_13db, attack, 150000, 3, workers=1)
    threaded, _ = run_protocol(config_13db, attack, 150000, 3, workers=3)
    assert serial.to_dict() == threaded.to_dict()


def test_different_seeds_differ(config_13db):
    """Test that the seed actually drives the noise."""
    a, _ = run_protocol(config_13db, AttackModel.none(), 20000, 1)
    b, _ = run_protocol(config_13db, AttackModel.none(), 20000, 2)
    assert a.empirical_ber_bob != b.empirical_ber_bob


def test_optimal_intercept_matches_analytic(config_13db):
    """Test Eve near 25% and Bob near his analytic rate under the 8% attack."""
    stats, _ = run_protocol(
        config_13db, AttackModel.optimal_symmetric(0.08), 1_000_000, 7
    )
    assert stats.analytic_ber_eve == pytest.approx(0.255, abs=0.005)
    assert _within(stats.empirical_ber_eve, stats.analytic_ber_eve, stats.se_eve)
    assert _within(stats.empirical_ber_bob, stats.analytic_ber_bob, stats.se_bob)
    assert not stats.aborted


def test_beamsplit_matches_analytic(config_13db):
    """Test a 16% beamsplitter tap against the analytic error rates."""
    stats, _ = run_protocol(config_13db, AttackModel.beamsplit(0.16), 1_000_000, 7)
    assert stats.analytic_ber_bob > 0.01
    assert stats.analytic_ber_eve < 0.5
    assert _within(stats.empirical_ber_eve, stats.analytic_ber_eve, stats.se_eve)
    assert _within(stats.empirical_ber_bob, stats.analytic_ber_bob, stats.se_bob)


def test_symmetric_split_gives_equal_rates(config_13db):
    """Test that a 50% optimal split gives Bob and Eve the same rate and aborts."""
    stats, material = run_protocol(
        config_13db, AttackModel.optimal_symmetric(0.5), 1_000_000, 7
    )
    combined = math.hypot(stats.se_bob, stats.se_eve)
    assert _within(stats.empirical_ber_bob, stats.empirical_ber_eve, combined)
    assert stats.aborted
    assert material.reconciled is None
    assert stats.pa_block_n is None


@pytest.mark.parametrize(
    "attack", [AttackModel.guess(), AttackModel.mid_quadrature()]
)
def test_resend_attacks_match_analytic(attack, config_13db):
    """Test the simulated resend attacks against their analytic error rates."""
    stats, _ = run_protocol(config_13db, attack, 1_000_000, 7)
    assert _within(stats.empirical_ber_eve, stats.analytic_ber_eve, stats.se_eve)
    assert _within(stats.empirical_ber_bob, stats.analytic_ber_bob, stats.se_bob)
    assert stats.empirical_ber_bob > 0.25
    assert stats.aborted


def test_lost_light_goes_to_eve():
    """Test that an unattacked lossy line gives Eve the tapped port."""
    config = load_config("coherent-loss25")
    stats, _ = run_protocol(config, AttackModel.none(), 1_000_000, 7)
    assert stats.analytic_ber_bob == pytest.approx(0.077, abs=5e-4)
    assert stats.analytic_ber_eve < 0.5
    assert _within(stats.empirical_ber_eve, stats.analytic_ber_eve, stats.se_eve)
    assert _within(stats.empirical_ber_bob, stats.analytic_ber_bob, stats.se_bob)


def test_squeezed_run_sifts_half(squeezed_config):
    """Test that quadrature agreement keeps half of the squeezed slots."""
    stats, material = run_protocol(squeezed_config, AttackModel.none(), 1_000_000, 7)
    assert _within(stats.sifted_fraction, 0.5, stats.sifted_fraction_se)
    assert material.alice_choice is not None
    agree = material.alice_choice == material.bob_choice
    assert np.array_equal(agree, material.sifted)


def test_teleport_penalty_product(config_13db):
    """Test that the optimal teleporter saturates V_E x V_B = 1."""
    stats, _ = run_protocol(config_13db, AttackModel.teleport(2.0), 20000, 7)
    assert stats.penalty_product == pytest.approx(1.0, abs=1e-9)


def test_unmodelled_squeezed_attack_raises(squeezed_config):
    """Test that a beamsplit attack on the squeezed scheme is refused."""
    with pytest.raises(DomainError):
        run_protocol(squeezed_config, AttackModel.beamsplit(0.2), 1000, 7)


def test_run_requires_slots(config_13db):
    """Test that an empty run is a domain error."""
    with pytest.raises(DomainError):
        run_protocol(config_13db, AttackModel.none(), 0, 7)


def test_slot_records(config_13db):
    """Test one record per slot with consistent fields."""
    _, material = run_protocol(config_13db, AttackModel.none(), 500, 7)
    records = list(iter_slot_records(material))
    assert len(records) == 500
    first = records[0]
    assert first.slot == 0
    assert first.bob_quadrature in (Quadrature.AMPLITUDE, Quadrature.PHASE)
    assert first.bob_bit == int(first.bob_soft_value > 0)
    assert first.alice_quadrature is None
    assert sum(r.disclosed for r in records) == 250


# --- Tests for reconcile ---


def test_reconcile_first_round_keep_fraction():
    """Test a round keeps (1 - B)^2 + B^2 of the pairs."""
    rng = np.random.default_rng(0)
    alice = rng.integers(0, 2, 100000, dtype=np.uint8)
    bob = _noisy_copy(alice, 0.05, 1)
    eve = _noisy_copy(alice, 0.3, 2)
    _, _, _, stats = reconcile(
        BitString(alice), BitString(bob), BitString(eve), 1, 9
    )
    assert stats.kept_fractions[0] == pytest.approx(0.95**2 + 0.05**2, abs=0.006)
    assert stats.lengths[0] == 100000 - 2 * round(
        (1 - stats.kept_fractions[0]) * 50000
    )


def test_reconcile_removes_bob_errors():
    """Test that several rounds drive Bob's residual error rate near zero."""
    rng = np.random.default_rng(3)
    alice = rng.integers(0, 2, 50000, dtype=np.uint8)
    bob = _noisy_copy(alice, 0.03, 4)
    eve = _noisy_copy(alice, 0.2, 5)
    a, b, e, stats = reconcile(BitString(alice), BitString(bob), BitString(eve), 8, 6)
    assert stats.residual_ber_bob < 1e-3
    assert stats.residual_ber_eve > 0.1
    assert len(a) == len(b) == len(e) == stats.lengths[-1]
    assert stats.pairs.shape[1] == 2
    assert stats.pairs.max() < len(a)


def test_reconcile_one_round_at_lossy_line_rate():
    """Test one round at 7.7% keeps about 0.858 with about 0.0069 left over."""
    rng = np.random.default_rng(21)
    alice = rng.integers(0, 2, 1_000_000, dtype=np.uint8)
    bob = _noisy_copy(alice, 0.077, 22)
    b = float(np.mean(alice != bob))
    _, _, _, stats = reconcile(
        BitString(alice), BitString(bob), BitString(alice), 1, 23
    )
    kept = (1 - b) ** 2 + b**2
    residual = b**2 / kept
    assert kept == pytest.approx(0.858, abs=0.003)
    assert residual == pytest.approx(0.0069, abs=2e-4)

    checked_pairs = 500_000
    kept_se = math.sqrt(kept * (1 - kept) / checked_pairs)
    assert _within(stats.kept_fractions[0], kept, kept_se)
    # errors survive two at a time, so the count of kept pairs sets the SE
    kept_pairs = stats.lengths[0] // 2
    residual_se = math.sqrt(residual * (1 - residual) / kept_pairs)
    assert _within(stats.residual_ber_bob, residual, residual_se)


def test_reconcile_leaves_eve_above_worst_case():
    """Test that Eve at 16.3% keeps at least 7% error once Bob's 9.3% is gone."""
    rng = np.random.default_rng(31)
    alice = rng.integers(0, 2, 200_000, dtype=np.uint8)
    bob = _noisy_copy(alice, 0.093, 32)
    eve = _noisy_copy(alice, 0.163, 33)
    _, _, _, stats = reconcile(BitString(alice), BitString(bob), BitString(eve), 8, 34)
    assert stats.residual_ber_bob < 1e-3
    assert stats.residual_ber_eve >= 0.163 - 0.093


def test_reconcile_zero_rounds_is_identity():
    """Test that no rounds leave the strings untouched."""
    key = BitString([0, 1, 1, 0])
    a, b, e, stats = reconcile(key, BitString([1, 1, 1, 0]), key, 0, 1)
    assert a == key and len(b) == 4
    assert stats.rounds_used == 0


def test_reconcile_length_mismatch():
    """Test that strings of different lengths raise DomainError."""
    with pytest.raises(DomainError):
        reconcile(BitString([0, 1]), BitString([0]), BitString([0, 1]), 1, 0)


# --- Tests for privacy_amplify ---


def test_privacy_amplify_block_parity():
    """Test that each output bit is the parity of an n-bit block."""
    amplified = privacy_amplify(BitString(np.ones(6, dtype=np.uint8)), 3, 4)
    assert amplified == BitString([1, 1])


def test_privacy_amplify_length_and_identity():
    """Test the output length and that n = 1 returns the key."""
    key = BitString(np.random.default_rng(0).integers(0, 2, 101, dtype=np.uint8))
    assert len(privacy_amplify(key, 10, 1)) == 10
    assert privacy_amplify(key, 1, 1) == key


def test_privacy_amplify_same_seed_same_blocks():
    """Test Alice and Bob with equal keys and seeds get equal outputs."""
    key = BitString(np.random.default_rng(2).integers(0, 2, 1000, dtype=np.uint8))
    pairs = np.array([[0, 1], [2, 3], [4, 5]])
    assert privacy_amplify(key, 7, 5, pairs) == privacy_amplify(key, 7, 5, pairs)


def test_privacy_amplify_impossible_exclusion():
    """Test that a pair that must share the only block cannot be honoured."""
    key = BitString([0, 1, 0, 1])
    with pytest.raises(PrivacyAmplificationError):
        privacy_amplify(key, 4, 0, np.array([[0, 1]]))


def test_privacy_amplify_invalid_block_length():
    """Test that n must be a positive integer no longer than the key."""
    key = BitString([0, 1, 0])
    with pytest.raises(DomainError):
        privacy_amplify(key, 0, 0)
    with pytest.raises(DomainError):
        privacy_amplify(key, 4, 0)


@pytest.fixture(scope="module")
def reconciled_keys():
    """A million-bit key reconciled with Bob at 5% and Eve at 7%."""
    rng = np.random.default_rng(41)
    alice = rng.integers(0, 2, 1_000_000, dtype=np.uint8)
    bob = _noisy_copy(alice, 0.05, 42)
    eve = _noisy_copy(alice, 0.07, 43)
    return reconcile(BitString(alice), BitString(bob), BitString(eve), 8, 44)


@pytest.mark.parametrize("n", [2, 14, 46])
def test_eve_block_error_follows_pa_error(reconciled_keys, n):
    """Test Eve's error on amplified bits against the block-parity formula."""
    a, _, e, stats = reconciled_keys
    key_a = privacy_amplify(a, n, 45, stats.pairs)
    key_e = privacy_amplify(e, n, 45, stats.pairs)
    expected = pa_error(stats.residual_ber_eve, n)
    se = math.sqrt(expected * (1 - expected) / len(key_a))
    assert _within(key_a.error_rate(key_e), expected, se)


@pytest.mark.parametrize("n", [2, 14, 46])
def test_blocks_never_hold_a_reconciliation_pair(reconciled_keys, n):
    """Test that no checked pair lands inside one amplification block."""
    a, _, _, stats = reconciled_keys
    blocks = assign_blocks(len(a), n, 45, stats.pairs)
    assert blocks.shape == (len(a) // n, n)
    block_of = np.full(len(a), -1)
    block_of[blocks.ravel()] = np.repeat(np.arange(len(blocks)), n)
    first, second = block_of[stats.pairs[:, 0]], block_of[stats.pairs[:, 1]]
    assert not np.any((first == second) & (first >= 0))
    parities = np.bitwise_xor.reduce(a.bits[blocks], axis=1)
    assert privacy_amplify(a, n, 45, stats.pairs) == BitString(parities)
