"""
Command line front end for the CV-QKD toolkit.

This module provides a Click-based interface that:
- Reports bit error rates for a calibrated channel.
- Writes the Bob/Eve error-rate curves and the privacy-amplification decay
  tables as CSV.
- Runs the analytic key-rate pipeline on a protocol config.
- Runs the Monte-Carlo protocol simulation and compares it with the analytic
  error rates.
- Replays a run manifest to regenerate its artifacts.

Every file written is accompanied by a ``*.manifest.json`` run manifest.
"""

import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from . import __version__
from .attacks import AttackModel, coherent_attack
from .config import list_bundled_configs, load_config, resolve_config_path
from .errors import CVQKDError, InsecureError
from .gaussian_optics import (
    QuadratureChannelState,
    apply_loss,
    simultaneous_detection,
    snr,
)
from .infotheory import ber_from_snr, snr_for_ber
from .keyrate import (
    curve_bob_vs_eve,
    decay_table,
    default_grid,
    discrepancy_note,
    key_efficiency,
)
from .protocol_sim import iter_slot_records, run_protocol
from .utils import RunManifest, manifest_path_for, to_json, write_csv, write_json

load_dotenv()

logger = logging.getLogger(__name__)

# --- Module-level Constants ---
EXIT_INSECURE = 3
EXIT_DOMAIN = 4

FIGURES = ("fig3", "fig4", "fig6")
FIG3_BASE_BERS = (0.01, 0.05)
FIG4_CONFIGS = ("coherent-13db", "coherent-10db")
FIG6_VNS = (1.0, 0.5, 0.1)

ATTACK_CHOICES = ("none", "guess", "mid", "beamsplit", "optimal", "teleport")


def default_output_dir() -> str:
    """Output directory from ``CVQKD_OUTPUT_DIR``, else ``cvqkd_output``."""
    return os.getenv("CVQKD_OUTPUT_DIR", "cvqkd_output")


# --- Console Helpers ---
def _error_console() -> Console:
    return Console(stderr=True)


def fail(exc: BaseException) -> None:
    """
    Report an exception and exit with the matching code.

    Insecure configurations exit with 3 and print the machine-readable
    reason as the last line of stdout. Everything else exits with 4.
    """
    console = _error_console()
    if isinstance(exc, InsecureError):
        console.print(f"[bold red]Insecure:[/] {exc}")
        click.echo(json.dumps(exc.to_dict(), sort_keys=True))
        sys.exit(EXIT_INSECURE)
    console.print(f"[bold red]Error:[/] {exc}")
    sys.exit(EXIT_DOMAIN)


def _fmt(value: Optional[float], digits: int = 6) -> str:
    if value is None:
        return "-"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return f"{value:.{digits}g}"


def _label(value: float) -> str:
    return f"{value:.6g}"


def _record(
    command: str,
    params: Dict[str, Any],
    artifacts: Sequence[Path],
    config: Optional[Dict[str, Any]] = None,
    seed: Optional[int] = None,
) -> Path:
    """Write the manifest describing ``artifacts`` next to the first of them."""
    manifest = RunManifest(
        command=command,
        params=params,
        seed=seed,
        config=config,
        artifacts=[str(p) for p in artifacts],
    )
    return manifest.write(manifest_path_for(artifacts[0]))


# --- CLI Group ---
@click.group()
@click.version_option(version=__version__, prog_name="cvqkd")
@click.option("--verbose", "-v", is_flag=True, help="Log pipeline stages (INFO).")
def main(verbose: bool) -> None:
    """cvqkd: continuous-variable quantum key distribution toolkit."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )


# --- BER Command ---
@main.command()
@click.option("--snr-db", type=float, default=None, help="Input SNR in dB.")
@click.option("--snr", "snr_linear", type=float, default=None, help="Linear SNR.")
@click.option(
    "--base-ber",
    type=float,
    default=None,
    help="Calibrate the SNR so the lossless error rate equals this value.",
)
@click.option("--loss", type=float, default=0.0, show_default=True)
@click.option(
    "--simultaneous",
    is_flag=True,
    help="Measure both quadratures at once behind a 50:50 split.",
)
@click.option("--json", "json_output", is_flag=True, help="Print JSON only.")
def ber(
    snr_db: Optional[float],
    snr_linear: Optional[float],
    base_ber: Optional[float],
    loss: float,
    simultaneous: bool,
    json_output: bool,
) -> None:
    """
    Print the bit error rate for a channel.

    Exactly one of --snr-db, --snr and --base-ber selects the input SNR.

    Examples
    --------
    cvqkd ber --base-ber 0.01 --simultaneous
    cvqkd ber --base-ber 0.05 --loss 0.25
    """
    chosen = [v is not None for v in (snr_db, snr_linear, base_ber)]
    if sum(chosen) != 1:
        raise click.UsageError(
            "Give exactly one of --snr-db, --snr and --base-ber."
        )

    try:
        if base_ber is not None:
            snr_in = snr_for_ber(base_ber)
        elif snr_db is not None:
            snr_in = 10.0 ** (snr_db / 10.0)
        else:
            snr_in = snr_linear

        state = apply_loss(QuadratureChannelState.coherent(vs_plus=snr_in), loss)
        if simultaneous:
            state = simultaneous_detection(state)
        detected = snr(state, "amplitude")
        report = {
            "snr_in": snr_in,
            "snr_in_db": 10.0 * math.log10(snr_in) if snr_in > 0 else None,
            "loss": loss,
            "simultaneous": simultaneous,
            "snr": detected,
            "ber": float(ber_from_snr(detected)),
        }
    except CVQKDError as e:
        fail(e)

    if json_output:
        click.echo(json.dumps(report, sort_keys=True))
        return
    console = Console()
    db = report["snr_in_db"]
    db_text = "no signal" if db is None else f"[cyan]{db:.3f}[/] dB"
    console.print(f"Input SNR: [cyan]{report['snr_in']:.6g}[/] ({db_text})")
    console.print(f"Detected SNR: [cyan]{report['snr']:.6g}[/]")
    console.print(f"BER: [bold green]{report['ber']:.6g}[/]")


# --- Curves Command ---
def _fig3_columns(base_bers: Sequence[float], points: int) -> Tuple[List, List]:
    header, columns = [], []
    for base in base_bers:
        curve = curve_bob_vs_eve(
            "coherent", snr_for_ber(base), default_grid(1.0, points)
        )
        tag = f"base{_label(base)}"
        header += [f"t_e_{tag}", f"bob_ber_{tag}", f"eve_ber_{tag}"]
        columns += [
            [p.t_e for p in curve],
            [p.bob_ber for p in curve],
            [p.eve_ber for p in curve],
        ]
    return header, columns


def _fig6_columns(
    base_ber: float, vns: Sequence[float], points: int
) -> Tuple[List, List]:
    header, columns = [], []
    snr_in = snr_for_ber(base_ber)
    for vn in vns:
        scheme = "squeezed" if vn < 1.0 else "coherent"
        curve = curve_bob_vs_eve(scheme, snr_in, default_grid(vn, points), vn)
        tag = f"vn{_label(vn)}"
        header += [f"t_e_{tag}", f"bob_ber_{tag}", f"eve_ber_{tag}"]
        columns += [
            [p.t_e for p in curve],
            [p.bob_ber for p in curve],
            [p.eve_ber for p in curve],
        ]
    return header, columns


def _fig4_columns(eve_bers: Sequence[float], max_n: int) -> Tuple[List, List]:
    header = ["n"]
    columns: List[List] = [list(range(1, max_n + 1))]
    for b in eve_bers:
        header.append(f"eve_mi_eve{_label(b)}")
        columns.append([mi for _, mi in decay_table(b, max_n)])
    return header, columns


@main.command()
@click.argument("figure", type=click.Choice(FIGURES))
@click.option(
    "--base-ber",
    type=float,
    multiple=True,
    help="Calibration error rate per trace (fig3); the first one is used by fig6.",
)
@click.option("--vn", type=float, multiple=True, help="Squeezed noise floors (fig6).")
@click.option(
    "--eve-ber",
    type=float,
    multiple=True,
    help="Eve's post-reconciliation error rate per trace (fig4).",
)
@click.option("--max-n", type=int, default=60, show_default=True)
@click.option("--points", type=int, default=201, show_default=True)
@click.option("--out", default=default_output_dir, help="Output directory.")
def curves(
    figure: str,
    base_ber: Sequence[float],
    vn: Sequence[float],
    eve_ber: Sequence[float],
    max_n: int,
    points: int,
    out: str,
) -> None:
    """
    Write curve data as CSV.

    fig3: minimum Bob and Eve error rates over Eve's transfer coefficient.
    fig4: Eve's mutual information against the privacy-amplification block
    length. fig6: the fig3 curve for several levels of squeezing.
    """
    console = Console()
    try:
        base_bers = list(base_ber) or list(FIG3_BASE_BERS)
        vns = list(vn) or list(FIG6_VNS)
        eve_bers = list(eve_ber) or [
            key_efficiency(load_config(name)).eve_ber_post_recon
            for name in FIG4_CONFIGS
        ]
        if max_n < 1:
            raise click.UsageError("--max-n must be >= 1")

        with console.status(f"Computing [cyan]{figure}[/]...", spinner="dots"):
            if figure == "fig3":
                header, columns = _fig3_columns(base_bers, points)
                provenance = [
                    f"coherent scheme, traces calibrated to base BER {base_bers}"
                ]
            elif figure == "fig6":
                header, columns = _fig6_columns(base_bers[0], vns, points)
                provenance = [
                    f"squeezed scheme at base BER {base_bers[0]}, floors vn {vns}"
                ]
            else:
                header, columns = _fig4_columns(eve_bers, max_n)
                provenance = [f"Eve post-reconciliation BER {eve_bers}"]

        units = "t_e: transfer coefficient; ber: probability; eve_mi: bits per bit"
        provenance = [f"cvqkd {__version__} curves {figure}"] + provenance
        provenance.append(f"units: {units}")

        path = write_csv(
            Path(out) / f"{figure}.csv", header, zip(*columns), provenance
        )
        params = dict(
            figure=figure,
            base_ber=base_bers,
            vn=vns,
            eve_ber=eve_bers,
            max_n=max_n,
            points=points,
            out=out,
        )
        _record("curves", params, [path])
    except (CVQKDError, IOError) as e:
        fail(e)

    console.print(f"Curve data saved to: [bold yellow]{path}[/]")


# --- Keyrate Command ---
def print_keyrate(console: Console, report: Dict[str, Any]) -> None:
    table = Table(title=f"Key rate ({report['scheme']})")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    for key in (
        "snr_in",
        "base_ber",
        "bob_threshold",
        "eve_ber_bound",
        "eve_ber_post_recon",
        "recon_factor",
        "pa_block_n",
        "efficiency",
        "efficiency_with_sift",
        "eve_mi_final",
    ):
        table.add_row(key, _fmt(report[key]))
    console.print(table)


@main.command()
@click.argument("config_name", metavar="CONFIG")
@click.option("--out", default=default_output_dir, help="Output directory.")
@click.option("--json", "json_output", is_flag=True, help="Print JSON only.")
def keyrate(config_name: str, out: str, json_output: bool) -> None:
    """
    Run the analytic key-rate pipeline on CONFIG.

    CONFIG is a JSON file or the name of a bundled config (see `cvqkd configs`).
    Exits with 3 and a JSON reason when the configuration cannot be secured.
    """
    try:
        config = load_config(config_name)
        report = key_efficiency(config).to_dict()
        stem = resolve_config_path(config_name).stem
        path = write_json(Path(out) / f"{stem}.keyrate.json", report)
        params = dict(config_name=config_name, out=out, json_output=json_output)
        _record("keyrate", params, [path], config=config.to_dict())
    except (CVQKDError, IOError) as e:
        fail(e)

    if json_output:
        click.echo(json.dumps(report, sort_keys=True))
        return
    console = Console()
    print_keyrate(console, report)
    console.print(f"Report saved to: [bold yellow]{path}[/]")


# --- Simulate Command ---
def build_attack(
    attack: str,
    te: Optional[float],
    fraction: Optional[float],
    gain: Optional[float],
    teleporter_gain: Optional[float],
) -> AttackModel:
    """Translate CLI flags into an :class:`AttackModel`, rejecting stray flags."""
    needs = {
        "optimal": {"te"},
        "beamsplit": {"fraction"},
        "teleport": {"gain"},
    }.get(attack, set())
    allowed = needs | ({"teleporter_gain"} if attack == "teleport" else set())
    given = {
        name
        for name, value in (
            ("te", te),
            ("fraction", fraction),
            ("gain", gain),
            ("teleporter_gain", teleporter_gain),
        )
        if value is not None
    }
    if needs - given:
        missing = ", ".join(f"--{n.replace('_', '-')}" for n in sorted(needs - given))
        raise click.UsageError(f"--attack {attack} requires {missing}")
    if given - allowed:
        stray = ", ".join(f"--{n.replace('_', '-')}" for n in sorted(given - allowed))
        raise click.UsageError(f"{stray} cannot be used with --attack {attack}")

    if attack == "none":
        return AttackModel.none()
    if attack == "guess":
        return AttackModel.guess()
    if attack == "mid":
        return AttackModel.mid_quadrature()
    if attack == "beamsplit":
        return AttackModel.beamsplit(fraction)
    if attack == "optimal":
        return AttackModel.optimal_symmetric(te)
    return AttackModel.teleport(gain, teleporter_gain)


def print_run_stats(console: Console, stats: Dict[str, Any]) -> None:
    """Print empirical against analytic error rates with standard errors."""
    table = Table(title=f"Simulation ({stats['scheme']}, {stats['attack']['kind']})")
    table.add_column("Quantity")
    table.add_column("Empirical", justify="right")
    table.add_column("SE", justify="right")
    table.add_column("Analytic", justify="right")
    table.add_column("Deviation / SE", justify="right")

    for label, party in (("Bob BER", "bob"), ("Eve BER", "eve")):
        emp = stats[f"empirical_ber_{party}"]
        se = stats[f"se_{party}"]
        analytic = stats[f"analytic_ber_{party}"]
        deviation = None
        if emp is not None and se:
            deviation = (emp - analytic) / se
        table.add_row(label, _fmt(emp), _fmt(se), _fmt(analytic), _fmt(deviation, 3))
    table.add_row(
        "Sifted fraction",
        _fmt(stats["sifted_fraction"]),
        _fmt(stats["sifted_fraction_se"]),
        "0.5" if stats["scheme"] == "squeezed" else "1",
        "-",
    )
    console.print(table)

    if stats["aborted"]:
        console.print(
            f"[bold yellow]Aborted:[/] disclosed BER {_fmt(stats['disclosed_ber'])}"
        )
        return
    console.print(f"Disclosed BER: [cyan]{_fmt(stats['disclosed_ber'])}[/]")
    console.print(
        f"Reconciliation: [cyan]{stats['reconciliation_rounds_used']}[/] rounds, "
        f"residual Bob/Eve BER [cyan]{_fmt(stats['residual_ber_bob'])}[/] / "
        f"[cyan]{_fmt(stats['residual_ber_eve'])}[/]"
    )
    if stats["pa_block_n"] is not None:
        console.print(
            f"Privacy amplification: n = [cyan]{stats['pa_block_n']}[/], "
            f"Eve MI [cyan]{_fmt(stats['empirical_eve_mi'])}[/] "
            f"(predicted {_fmt(stats['predicted_eve_mi'])})"
        )
    if stats["penalty_product"] is not None:
        console.print(f"V_E x V_B: [cyan]{stats['penalty_product']:.12g}[/]")


def _slot_rows(material) -> Any:
    for r in iter_slot_records(material):
        yield (
            r.slot,
            r.alice_bits[0],
            r.alice_bits[1],
            "" if r.alice_quadrature is None else r.alice_quadrature.value,
            r.bob_quadrature.value,
            r.bob_soft_value,
            r.bob_bit,
            r.eve_soft_values[0],
            r.eve_soft_values[1],
            r.eve_bits[0],
            r.eve_bits[1],
            r.sifted,
            r.disclosed,
        )


SLOT_HEADER = [
    "slot",
    "alice_bit_amplitude",
    "alice_bit_phase",
    "alice_quadrature",
    "bob_quadrature",
    "bob_soft",
    "bob_bit",
    "eve_soft_amplitude",
    "eve_soft_phase",
    "eve_bit_amplitude",
    "eve_bit_phase",
    "sifted",
    "disclosed",
]


@main.command()
@click.option(
    "--config",
    "config_name",
    default="coherent-13db",
    show_default=True,
    help="Config file or bundled config name.",
)
@click.option(
    "--attack", type=click.Choice(ATTACK_CHOICES), default="none", show_default=True
)
@click.option("--te", type=float, default=None, help="Eve transfer (optimal).")
@click.option("--fraction", type=float, default=None, help="Tap fraction (beamsplit).")
@click.option("--gain", type=float, default=None, help="Parametric gain (teleport).")
@click.option(
    "--lambda",
    "teleporter_gain",
    type=float,
    default=None,
    help="Teleporter gain (teleport); defaults to the optimum.",
)
@click.option("--slots", type=int, default=None, help="Overrides the config.")
@click.option("--seed", type=int, default=None, help="Overrides the config.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", default=default_output_dir, help="Output directory.")
@click.option("--slots-csv", is_flag=True, help="Also write the per-slot records.")
@click.option("--json", "json_output", is_flag=True, help="Print JSON only.")
def simulate(
    config_name: str,
    attack: str,
    te: Optional[float],
    fraction: Optional[float],
    gain: Optional[float],
    teleporter_gain: Optional[float],
    slots: Optional[int],
    seed: Optional[int],
    workers: int,
    out: str,
    slots_csv: bool,
    json_output: bool,
) -> None:
    """
    Run the protocol end to end with Monte-Carlo slots.

    Examples
    --------
    cvqkd simulate --attack optimal --te 0.08 --slots 1000000 --seed 7
    cvqkd simulate --attack teleport --gain 2
    """
    model = build_attack(attack, te, fraction, gain, teleporter_gain)
    try:
        config = load_config(config_name)
        seed = config.seed if seed is None else seed
        slots = config.n_slots if slots is None else slots

        console = Console(stderr=json_output)
        with console.status(
            f"Simulating [cyan]{slots}[/] slots ({attack})...", spinner="dots"
        ):
            stats, material = run_protocol(
                config, model, n_slots=slots, seed=seed, workers=workers
            )
        report = stats.to_dict()

        out_dir = Path(out)
        artifacts = [write_json(out_dir / f"simulate-{attack}-s{seed}.json", report)]
        if slots_csv:
            artifacts.append(
                write_csv(
                    out_dir / f"simulate-{attack}-s{seed}.slots.csv",
                    SLOT_HEADER,
                    _slot_rows(material),
                    [f"cvqkd {__version__} simulate {attack} seed {seed}"],
                )
            )
        params = dict(
            config_name=config_name,
            attack=attack,
            te=te,
            fraction=fraction,
            gain=gain,
            teleporter_gain=teleporter_gain,
            slots=slots,
            seed=seed,
            workers=workers,
            out=out,
            slots_csv=slots_csv,
            json_output=json_output,
        )
        _record("simulate", params, artifacts, config=config.to_dict(), seed=seed)
    except (CVQKDError, IOError) as e:
        fail(e)

    if json_output:
        click.echo(to_json(report), nl=False)
        return
    print_run_stats(console, report)
    console.print(f"Run statistics saved to: [bold yellow]{artifacts[0]}[/]")


# --- Attacks Command ---
@main.command()
@click.option("--base-ber", type=float, default=0.01, show_default=True)
@click.option("--te", type=float, default=0.08, show_default=True)
@click.option("--fraction", type=float, default=0.16, show_default=True)
@click.option("--json", "json_output", is_flag=True, help="Print JSON only.")
def attacks(base_ber: float, te: float, fraction: float, json_output: bool) -> None:
    """
    Tabulate the coherent-scheme attacks at a calibrated SNR.

    Also prints how the recomputed Bob error rates of the two quoted intercept
    examples compare with the quoted values.
    """
    try:
        snr_in = snr_for_ber(base_ber)
        models = [
            AttackModel.none(),
            AttackModel.guess(),
            AttackModel.mid_quadrature(),
            AttackModel.beamsplit(fraction),
            AttackModel.optimal_symmetric(te),
            AttackModel.teleport(2.0),
        ]
        rows = []
        for model in models:
            outcome = coherent_attack(model, snr_in)
            rows.append(
                {
                    "attack": model.to_dict(),
                    "t_eve": outcome.t_eve.plus,
                    "t_bob": outcome.t_bob.plus,
                    "ber_eve": outcome.ber_eve,
                    "ber_bob": outcome.ber_bob,
                }
            )
        notes = [entry.to_dict() for entry in discrepancy_note(snr_in)]
    except CVQKDError as e:
        fail(e)

    if json_output:
        payload = {"snr_in": snr_in, "outcomes": rows, "discrepancies": notes}
        click.echo(json.dumps(payload, sort_keys=True))
        return

    console = Console()
    table = Table(title=f"Coherent attacks at base BER {base_ber}")
    for name in ("Attack", "T_E", "T_B", "Eve BER", "Bob BER"):
        table.add_column(name, justify="left" if name == "Attack" else "right")
    for row in rows:
        params = ", ".join(f"{k}={v}" for k, v in row["attack"].items() if k != "kind")
        label = row["attack"]["kind"] + (f" ({params})" if params else "")
        table.add_row(
            label,
            _fmt(row["t_eve"], 4),
            _fmt(row["t_bob"], 4),
            _fmt(row["ber_eve"], 4),
            _fmt(row["ber_bob"], 4),
        )
    console.print(table)
    for note in notes:
        console.print(f"[yellow]Note:[/] {note['note']}")


# --- Configs Command ---
@main.command()
@click.option("--show", "show_name", default=None, help="Print one config as JSON.")
def configs(show_name: Optional[str]) -> None:
    """List the bundled protocol configs, or print one of them."""
    try:
        if show_name is not None:
            click.echo(json.dumps(load_config(show_name).to_dict(), sort_keys=True))
            return

        console = Console()
        table = Table(title="Bundled configs")
        table.add_column("Name")
        table.add_column("Scheme")
        table.add_column("Description")
        for name in list_bundled_configs():
            config = load_config(name)
            table.add_row(Path(name).stem, config.scheme, config.description)
        console.print(table)
    except CVQKDError as e:
        fail(e)


# --- Replay Command ---
@main.command()
@click.argument(
    "manifest_path",
    metavar="MANIFEST",
    type=click.Path(exists=True, dir_okay=False, readable=True),
)
@click.pass_context
def replay(ctx: click.Context, manifest_path: str) -> None:
    """Re-run the command recorded in MANIFEST, regenerating its artifacts."""
    try:
        manifest = RunManifest.load(Path(manifest_path))
    except CVQKDError as e:
        fail(e)

    command = main.commands.get(manifest.command)
    if command is None or manifest.command == "replay":
        fail(CVQKDError(f"Manifest names an unknown command: {manifest.command!r}"))
    if manifest.version != __version__:
        logger.warning(
            "Manifest was written by cvqkd %s, replaying with %s",
            manifest.version,
            __version__,
        )
    ctx.invoke(command, **manifest.params)


if __name__ == "__main__":
    main()
