"""
Protocol configuration: the validated ``ProtocolConfig`` value and helpers
to load it from JSON files, either on disk or bundled with the package.

Bundled configs live in the ``configs/`` directory adjacent to this file and
encode the worked examples of the coherent and squeezed schemes.
"""

# --- Imports ---
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .errors import ConfigError, DomainError
from .gaussian_optics import QuadratureChannelState, apply_loss, snr
from .infotheory import ber_from_snr, snr_for_ber

# --- Module-level Constants ---
# Bundled configs are expected to be adjacent to this file
CONFIG_DIR = Path(__file__).parent / "configs"

SCHEMES = ("coherent", "squeezed")

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "description": "Coherent scheme, SNR calibrated to a 1% base error rate",
    "scheme": "coherent",
    "vn": 1.0,
    "base_ber": 0.01,
    "loss": 0.0,
    "bob_threshold": 0.02,
    "threshold_margin": 0.005,
    "target_eve_mi": 0.001,
    "n_slots": 100000,
    "seed": 7,
    "reconciliation_rounds": 8,
}


# --- Domain Types ---


@dataclass(frozen=True)
class ProtocolConfig:
    """
    Parameters of one protocol run or key-rate evaluation.

    Parameters
    ----------
    scheme : str
        ``"coherent"`` or ``"squeezed"``.
    vn : float
        Squeezed noise floor in QNL units; 1.0 for the coherent scheme.
    base_ber, snr_in : float, optional
        Exactly one must be given. ``base_ber`` calibrates the no-loss SNR so
        that Bob's unattacked error rate equals it.
    loss : float
        Line loss in [0, 1); the lost light is assumed to reach Eve.
    bob_threshold : float
        Abort cutoff on the error rate Alice and Bob measure.
    threshold_margin : float
        Excess over the cutoff assumed by a cautious Alice and Bob.
    target_eve_mi : float
        Eve's allowed mutual information per final key bit.
    n_slots, seed, reconciliation_rounds : int
        Monte-Carlo size, seed and maximum number of parity-check rounds.
    """

    scheme: str = "coherent"
    vn: float = 1.0
    base_ber: Optional[float] = None
    snr_in: Optional[float] = None
    loss: float = 0.0
    bob_threshold: float = 0.02
    threshold_margin: float = 0.005
    target_eve_mi: float = 0.001
    n_slots: int = 100000
    seed: int = 7
    reconciliation_rounds: int = 8
    description: str = ""

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "coherent" and self.vn != 1.0:
            raise ConfigError("The coherent scheme has vn = 1 by definition")
        if not 0.0 < self.vn <= 1.0:
            raise ConfigError(f"vn must lie in (0, 1], got {self.vn}")
        if (self.base_ber is None) == (self.snr_in is None):
            raise ConfigError("Exactly one of base_ber and snr_in must be set")
        if self.base_ber is not None and not 0.0 < self.base_ber < 0.5:
            raise ConfigError(f"base_ber must lie in (0, 0.5), got {self.base_ber}")
        if self.snr_in is not None and self.snr_in <= 0:
            raise ConfigError(f"snr_in must be > 0, got {self.snr_in}")
        if not 0.0 <= self.loss < 1.0:
            raise ConfigError(f"loss must lie in [0, 1), got {self.loss}")
        if not 0.0 < self.bob_threshold < 0.5:
            raise ConfigError(
                f"bob_threshold must lie in (0, 0.5), got {self.bob_threshold}"
            )
        if self.threshold_margin < 0 or self.cautious_ber >= 0.5:
            raise ConfigError(
                "threshold_margin must be >= 0 and keep the cautious error rate "
                "below 0.5"
            )
        if not 0.0 < self.target_eve_mi < 1.0:
            raise ConfigError(
                f"target_eve_mi must lie in (0, 1), got {self.target_eve_mi}"
            )
        if self.n_slots < 1:
            raise ConfigError(f"n_slots must be >= 1, got {self.n_slots}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.reconciliation_rounds < 0:
            raise ConfigError("reconciliation_rounds must be >= 0")

        base = self.base_ber_at_loss()
        if self.bob_threshold < base:
            raise ConfigError(
                f"bob_threshold {self.bob_threshold} is below the base error rate "
                f"{base:.6g} at loss {self.loss}: every run would abort"
            )

    # --- Derived Quantities ---

    @property
    def is_squeezed(self) -> bool:
        """True for a squeezed scheme with a floor strictly below the QNL."""
        return self.scheme == "squeezed" and self.vn < 1.0

    @property
    def input_snr(self) -> float:
        """No-loss SNR on the key quadrature, measured against the noise floor."""
        if self.snr_in is not None:
            return self.snr_in
        return snr_for_ber(self.base_ber)

    @property
    def cautious_ber(self) -> float:
        return self.bob_threshold + self.threshold_margin

    def channel_state(self) -> QuadratureChannelState:
        """Beam Alice launches, signal on the amplitude quadrature."""
        if self.is_squeezed:
            return QuadratureChannelState.squeezed(self.vn, vs=self.input_snr * self.vn)
        return QuadratureChannelState.coherent(vs_plus=self.input_snr)

    def line_transfer(self) -> float:
        """Transfer coefficient of the lossy line alone."""
        if self.loss == 0.0:
            return 1.0
        launched = self.channel_state()
        return snr(apply_loss(launched, self.loss), "amplitude") / snr(
            launched, "amplitude"
        )

    def base_ber_at_loss(self) -> float:
        """Bob's error rate with no eavesdropper, after line loss."""
        return ber_from_snr(self.line_transfer() * self.input_snr)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProtocolConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid config: {e}") from e
        except DomainError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid config: {e}") from e


# --- Helper Functions ---


def list_bundled_configs() -> List[str]:
    """Names of the configs shipped with the package."""
    if not CONFIG_DIR.is_dir():
        return []
    return sorted(p.name for p in CONFIG_DIR.glob("*.json"))


def resolve_config_path(name_or_path: Union[str, Path]) -> Path:
    """
    Resolve a filesystem path or the name of a bundled config.

    Parameters
    ----------
    name_or_path : str or pathlib.Path
        An existing file, or a bundled config name with or without ``.json``.

    Returns
    -------
    pathlib.Path
        The file to read.
    """
    path = Path(name_or_path)
    if path.is_file():
        return path

    name = path.name if path.suffix == ".json" else f"{path.name}.json"
    bundled = CONFIG_DIR / name
    if bundled.is_file():
        return bundled
    raise ConfigError(
        f"Config '{name_or_path}' is neither a file nor a bundled config "
        f"({', '.join(list_bundled_configs()) or 'none bundled'})"
    )


def load_config(name_or_path: Optional[Union[str, Path]] = None) -> ProtocolConfig:
    """
    Load a protocol configuration.

    ``None`` returns :data:`DEFAULT_CONFIG`. Unreadable or invalid files are
    logged and raised as :class:`ConfigError`.
    """
    if name_or_path is None:
        return ProtocolConfig.from_dict(DEFAULT_CONFIG)

    path = resolve_config_path(name_or_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error("Error loading configuration %s: %s", path, e)
        raise ConfigError(f"Could not read config {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a JSON object")
    return ProtocolConfig.from_dict(data)
