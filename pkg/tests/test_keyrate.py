import math

import numpy as np
import pytest

from src.cvqkd.config import ProtocolConfig, load_config
from src.cvqkd.errors import DomainError, InsecureError
from src.cvqkd.infotheory import snr_for_ber
from src.cvqkd.keyrate import (
    COHERENT_SIFT_FACTOR,
    SQUEEZED_SIFT_FACTOR,
    curve_bob_vs_eve,
    decay_table,
    default_grid,
    discrepancy_note,
    eve_ber_bound,
    key_efficiency,
    reconcile_accounting,
    squeezed_breakeven_loss,
    squeezed_eve_ber_bound,
)


# --- Tests for the Eve bounds ---


@pytest.mark.parametrize(
    "base, threshold, expected",
    [(0.01, 0.025, 0.10507), (0.05, 0.065, 0.26022), (0.05, 0.093, 0.16403)],
)
def test_eve_ber_bound_worked_examples(base, threshold, expected):
    """Test Eve's minimum error rate for the cautious thresholds."""
    bound = eve_ber_bound(snr_for_ber(base), threshold)
    assert bound == pytest.approx(expected, abs=2e-4)


def test_eve_ber_bound_threshold_below_base_raises(calibrated_snr):
    """Test that a threshold below the unattacked error rate is refused."""
    with pytest.raises(DomainError):
        eve_ber_bound(calibrated_snr, 0.005)


def test_squeezed_bound_unsqueezed_delegates(calibrated_snr):
    """Test that vn = 1 gives the coherent bound."""
    assert squeezed_eve_ber_bound(calibrated_snr, 1.0, 0.025) == pytest.approx(
        eve_ber_bound(calibrated_snr, 0.025)
    )


def test_squeezed_bound_beats_coherent(calibrated_snr):
    """Test that squeezing raises the error rate Eve must accept."""
    squeezed = squeezed_eve_ber_bound(calibrated_snr, 0.1, 0.025)
    assert squeezed == pytest.approx(0.38397, abs=5e-4)
    assert squeezed > eve_ber_bound(calibrated_snr, 0.025)


# --- Tests for reconciliation accounting ---


def test_reconcile_accounting():
    """Test the worst-case reduction of Eve's error rate by Bob's."""
    factor, eve_post = reconcile_accounting(0.10507, 0.025)
    assert factor == pytest.approx(0.95)
    assert eve_post == pytest.approx(0.08007)


def test_reconcile_accounting_maurer_violation():
    """Test that Eve doing no worse than Bob is insecure."""
    with pytest.raises(InsecureError) as excinfo:
        reconcile_accounting(0.02, 0.025)
    assert excinfo.value.reason == "maurer_condition_violated"
    assert excinfo.value.to_dict()["status"] == "insecure"


# --- Tests for key_efficiency ---


def test_key_efficiency_13db():
    """Test the 1%-calibrated worked example: n = 40."""
    report = key_efficiency(load_config("coherent-13db"))
    assert report.bob_threshold == pytest.approx(0.025)
    assert report.eve_ber_bound == pytest.approx(0.10507, abs=2e-4)
    assert report.eve_ber_post_recon == pytest.approx(0.08007, abs=2e-4)
    assert report.pa_block_n == 40
    assert report.efficiency == pytest.approx(0.5 * 0.95 / 40)
    assert report.eve_mi_final <= 0.001
    assert report.sift_factor == COHERENT_SIFT_FACTOR


def test_key_efficiency_10db():
    """Test the 5%-calibrated worked example: n = 14."""
    report = key_efficiency(load_config("coherent-10db"))
    assert report.eve_ber_bound == pytest.approx(0.26022, abs=2e-4)
    assert report.eve_ber_post_recon == pytest.approx(0.195, abs=1e-3)
    assert report.pa_block_n == 14
    assert report.efficiency == pytest.approx(0.031071, abs=1e-5)


def test_key_efficiency_with_loss():
    """Test the 25% loss example: 7.7% base error, n = 46, about 0.0088."""
    report = key_efficiency(load_config("coherent-loss25"))
    assert report.base_ber == pytest.approx(0.077, abs=5e-4)
    assert report.eve_ber_bound == pytest.approx(0.16403, abs=2e-4)
    assert report.pa_block_n == 46
    assert report.efficiency == pytest.approx(0.0088, abs=1e-4)
    assert report.recon_factor == pytest.approx(1 - 2 * 0.093)


def test_key_efficiency_squeezed(squeezed_config):
    """Test the 10 dB squeezed example lands near 0.07 with a 0.5 sift."""
    report = key_efficiency(squeezed_config)
    assert report.pa_block_n == 6
    assert report.efficiency == pytest.approx(0.07, abs=0.015)
    assert report.sift_factor == SQUEEZED_SIFT_FACTOR
    assert report.efficiency_with_sift == pytest.approx(0.5 * report.efficiency)


@pytest.mark.parametrize(
    "name, twin",
    [("paper-loss25", "coherent-loss25"), ("paper-squeezed10db", "squeezed-10db")],
)
def test_worked_example_configs_match_their_twins(name, twin):
    """Test that the worked-example configs give the same report as their twins."""
    assert key_efficiency(load_config(name)).to_dict() == (
        key_efficiency(load_config(twin)).to_dict()
    )


def test_worked_example_config_values():
    """Test n = 46 with loss and about 0.07 for 10 dB squeezing."""
    lossy = key_efficiency(load_config("paper-loss25"))
    assert lossy.pa_block_n == 46
    assert lossy.efficiency == pytest.approx(0.0088, abs=1e-4)
    squeezed = key_efficiency(load_config("paper-squeezed10db"))
    assert squeezed.efficiency == pytest.approx(0.07, abs=0.015)


def test_key_efficiency_half_loss_is_insecure():
    """Test that 50% loss on the coherent scheme cannot be secured."""
    config = ProtocolConfig(base_ber=0.01, loss=0.5, bob_threshold=0.06)
    with pytest.raises(InsecureError) as excinfo:
        key_efficiency(config)
    assert excinfo.value.reason == "maurer_condition_violated"
    assert excinfo.value.eve_ber < excinfo.value.bob_threshold


def test_efficiency_never_rises_with_threshold():
    """Test that a looser abort cutoff never buys a longer key."""
    efficiencies = [
        key_efficiency(ProtocolConfig(base_ber=0.01, bob_threshold=t)).efficiency
        for t in np.linspace(0.012, 0.03, 10)
    ]
    assert all(b <= a for a, b in zip(efficiencies, efficiencies[1:]))
    assert efficiencies[-1] < efficiencies[0]


def test_report_to_dict_mirrors_fields():
    """Test that the JSON form carries every report field."""
    data = key_efficiency(load_config("coherent-13db")).to_dict()
    assert data["pa_block_n"] == 40
    assert set(data) >= {"efficiency", "efficiency_with_sift", "sift_factor"}


# --- Tests for curves ---


def test_coherent_curve_is_monotone(calibrated_snr):
    """Test Bob's error rises and Eve's falls as Eve takes more signal."""
    curve = curve_bob_vs_eve("coherent", calibrated_snr, default_grid(1.0, 51))
    bob = np.array([p.bob_ber for p in curve])
    eve = np.array([p.eve_ber for p in curve])
    assert np.all(np.diff(bob) > 0)
    assert np.all(np.diff(eve) < 0)
    assert curve[0].bob_ber == pytest.approx(0.01)
    assert curve[0].eve_ber == pytest.approx(0.5)


def test_squeezed_curve_with_unit_floor_matches_coherent(calibrated_snr):
    """Test that vn = 1 reproduces the coherent curve point for point."""
    grid = default_grid(1.0, 21)
    assert curve_bob_vs_eve("squeezed", calibrated_snr, grid, vn=1.0) == (
        curve_bob_vs_eve("coherent", calibrated_snr, grid)
    )


def test_squeezed_curve_caps_eve(calibrated_snr):
    """Test that a 10 dB squeezed curve stops at Eve's cap with Bob at 2/3."""
    grid = default_grid(0.1, 21)
    curve = curve_bob_vs_eve("squeezed", calibrated_snr, grid, vn=0.1)
    assert curve[-1].t_e == pytest.approx(1 / 6)
    assert curve[-1].t_b == pytest.approx(2 / 3)
    assert curve[0].t_b == 1.0


@pytest.mark.parametrize("vn", [0.5, 0.1])
def test_squeezed_curve_is_monotone(calibrated_snr, vn):
    """Test that Bob's error rises while Eve's falls along a squeezed curve."""
    curve = curve_bob_vs_eve("squeezed", calibrated_snr, default_grid(vn, 51), vn=vn)
    bob = np.array([p.bob_ber for p in curve])
    eve = np.array([p.eve_ber for p in curve])
    assert np.all(np.diff(bob) > 0)
    assert np.all(np.diff(eve) < 0)


def test_squeezed_bob_pays_more_at_quarter_eve_error(calibrated_snr):
    """Test that at Eve 25%, 10 dB squeezing leaves Bob worse off than coherent."""
    t_e = snr_for_ber(0.25) / calibrated_snr
    (squeezed,) = curve_bob_vs_eve("squeezed", calibrated_snr, [t_e], vn=0.1)
    (coherent,) = curve_bob_vs_eve("coherent", calibrated_snr, [t_e])
    assert squeezed.eve_ber == pytest.approx(0.25, abs=1e-9)
    assert coherent.eve_ber == pytest.approx(0.25, abs=1e-9)
    assert squeezed.bob_ber > coherent.bob_ber


def test_curve_rejects_out_of_range_grid(calibrated_snr):
    """Test that transfers beyond the admissible range raise DomainError."""
    with pytest.raises(DomainError):
        curve_bob_vs_eve("coherent", calibrated_snr, [0.5, 1.2])
    with pytest.raises(DomainError):
        default_grid(1.0, 1)


def test_decay_table_is_log_linear():
    """Test the fitted slope of ln(MI) against n equals ln(1 - 2b)."""
    b = 0.08
    table = decay_table(b, 50)
    n = np.array([row[0] for row in table])
    mi = np.array([row[1] for row in table])
    slope = np.polyfit(n, np.log(mi), 1)[0]
    assert slope == pytest.approx(math.log(1 - 2 * b), rel=0.01)
    assert table[0] == (1, pytest.approx(0.84))


# --- Tests for loss tolerance ---


def test_breakeven_loss_coherent():
    """Test that an unsqueezed beam tolerates 50% loss."""
    assert squeezed_breakeven_loss(1.0) == pytest.approx(0.5, abs=1e-6)


def test_breakeven_loss_squeezed():
    """Test the 10 dB squeezed break-even loss against its closed form."""
    loss = squeezed_breakeven_loss(0.1)
    assert loss == pytest.approx(0.1 / (0.1 + math.sqrt(0.4 / 1.3)), abs=1e-6)
    assert loss == pytest.approx(0.16, abs=0.02)


def test_breakeven_loss_rises_towards_half():
    """Test that weaker squeezing tolerates more loss, approaching 50%."""
    losses = [
        squeezed_breakeven_loss(vn)
        for vn in (0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999)
    ]
    assert all(a < b for a, b in zip(losses, losses[1:]))
    assert all(loss < 0.5 for loss in losses)
    assert losses[-1] > 0.499


def test_breakeven_loss_independent_of_snr():
    """Test that the root does not depend on the signal strength."""
    assert squeezed_breakeven_loss(0.3, snr_for_ber(0.05)) == pytest.approx(
        squeezed_breakeven_loss(0.3), abs=1e-6
    )


# --- Tests for discrepancy reporting ---


def test_discrepancy_note(calibrated_snr):
    """Test the recomputed Bob error rates of the two intercept examples."""
    entries = {e.attack: e for e in discrepancy_note(calibrated_snr)}
    assert set(entries) == {"optimal_symmetric", "beamsplit"}
    optimal = entries["optimal_symmetric"]
    assert optimal.reference_bob_ber == 0.014
    assert 0.012 <= optimal.computed_bob_ber <= 0.022
    assert optimal.deviation_pp == pytest.approx(
        100 * (optimal.computed_bob_ber - 0.014)
    )
    assert "optimal_symmetric" in optimal.note()
    assert entries["beamsplit"].to_dict()["computed_bob_ber"] == pytest.approx(
        0.0165, abs=5e-4
    )
