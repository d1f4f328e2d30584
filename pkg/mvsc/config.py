import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional

from .dataset import SyntheticSpec, SyntheticSpecError
from .graphs import AUTO
from .solver import LatentGraphRefresh, SolverConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "MVSC_THREADS"
ABLATIONS = ("DGRMSC", "GRMSC", "BOTH")
# Candidate values for lambda, beta and gamma in the tuning grid
PARAMETER_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)


class ConfigError(Exception):
    """Custom exception for configuration errors"""
    pass


class ConfigFileError(ConfigError):
    """Exception for unreadable or malformed config files"""
    pass


class ConfigValueError(ConfigError):
    """Exception for unknown keys or invalid values"""
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Konfiguration für einen Experiment-Lauf (fit, eval, sweep, synth)"""
    solver: SolverConfig = field(default_factory=SolverConfig)
    dataset_path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    transpose: bool = False
    minmax: bool = False
    clusters: Optional[int] = None
    runs: int = 30
    output_dir: str = "results"
    ablation: str = "DGRMSC"
    refit_per_run: bool = False
    threads: int = 1
    sweep_runs: Optional[int] = None
    grids: Dict[str, List[Any]] = field(default_factory=dict)

    @property
    def base_seed(self) -> int:
        return self.solver.seed

    def validate(self):
        """
        Raises:
            ConfigValueError: If settings contradict each other or are out of range
            InvalidConfigError: If the solver settings are invalid
        """
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ConfigValueError("Exactly one of a dataset path or a synthetic spec must be set")
        if self.runs < 1:
            raise ConfigValueError(f"runs must be >= 1, got {self.runs}")
        if self.sweep_runs is not None and self.sweep_runs < 1:
            raise ConfigValueError(f"sweep_runs must be >= 1, got {self.sweep_runs}")
        if self.clusters is not None and self.clusters < 2:
            raise ConfigValueError(f"clusters must be >= 2, got {self.clusters}")
        if self.ablation not in ABLATIONS:
            raise ConfigValueError(f"Invalid ablation '{self.ablation}'. Valid options: {', '.join(ABLATIONS)}")
        if self.threads < 1:
            raise ConfigValueError(f"threads must be >= 1, got {self.threads}")
        for name, values in self.grids.items():
            if not values:
                raise ConfigValueError(f"Grid '{name}' is empty")
        self.solver.validate()
        if self.synthetic is not None:
            try:
                self.synthetic.validate()
            except SyntheticSpecError as e:
                raise ConfigValueError(str(e))


# === VALUE PARSERS ===

def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_sigma(value: Any):
    text = str(value).strip().lower()
    if text == AUTO:
        return AUTO
    return float(text)


def _to_optional_int(value: Any) -> Optional[int]:
    text = str(value).strip().lower()
    if text in (AUTO, "none", ""):
        return None
    return int(text)


def _list_of(convert: Callable[[str], Any]) -> Callable[[Any], List[Any]]:
    def parse(value: Any) -> List[Any]:
        if isinstance(value, (list, tuple)):
            return [convert(v) for v in value]
        return [convert(part.strip()) for part in str(value).split(",") if part.strip()]
    return parse


def _to_ablation(value: Any) -> str:
    return str(value).strip().upper()


# key -> (converter, target)
SOLVER_KEYS: Dict[str, tuple] = {
    "lambda": (float, "lambda_"),
    "beta": (float, "beta"),
    "gamma": (float, "gamma"),
    "latent_dim": (_to_optional_int, "m"),
    "knn": (int, "k"),
    "sigma": (_to_sigma, "sigma"),
    "latent_sigma": (_to_sigma, "latent_sigma"),
    "mu0": (float, "mu0"),
    "rho": (float, "rho"),
    "mu_max": (float, "mu_max"),
    "eps": (float, "epsilon"),
    "max_iter": (int, "max_iter"),
    "seed": (int, "seed"),
    "ly_refresh": (LatentGraphRefresh.parse, "ly_refresh"),
    "zero_errors": (_to_bool, "zero_errors"),
}

SYNTHETIC_KEYS: Dict[str, tuple] = {
    "n_per_cluster": (int, "n_per_cluster"),
    "synth_clusters": (int, "c"),
    "views": (int, "V"),
    "synth_latent_dim": (int, "latent_dim"),
    "view_dims": (lambda v: tuple(_list_of(int)(v)), "view_dims"),
    "noise": (float, "noise_sigma"),
    "separation": (float, "cluster_separation"),
    "data_seed": (int, "seed"),
}

EXPERIMENT_KEYS: Dict[str, tuple] = {
    "dataset": (str, "dataset_path"),
    "transpose": (_to_bool, "transpose"),
    "minmax": (_to_bool, "minmax"),
    "clusters": (int, "clusters"),
    "runs": (int, "runs"),
    "out": (str, "output_dir"),
    "ablation": (_to_ablation, "ablation"),
    "refit_per_run": (_to_bool, "refit_per_run"),
    "sweep_runs": (int, "sweep_runs"),
}

GRID_KEYS: Dict[str, tuple] = {
    "lambda_grid": (_list_of(float), "lambda_"),
    "beta_grid": (_list_of(float), "beta"),
    "gamma_grid": (_list_of(float), "gamma"),
    "latent_dim_grid": (_list_of(int), "m"),
    "knn_grid": (_list_of(int), "k"),
}

KNOWN_KEYS = set(SOLVER_KEYS) | set(SYNTHETIC_KEYS) | set(EXPERIMENT_KEYS) | set(GRID_KEYS)


def normalize_key(key: str) -> str:
    return key.strip().lower().lstrip("-").replace("-", "_")


def load_config_file(path: str) -> Dict[str, str]:
    """
    Read a key=value config file; '#' starts a comment, blank lines are skipped.

    Raises:
        ConfigFileError: If the file is missing or a line is malformed
        ConfigValueError: If a key is unknown
    """
    if not os.path.isfile(path):
        raise ConfigFileError(f"Config file does not exist: {path}")
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigFileError(f"{path}:{number}: expected key=value, got '{line}'")
            key, value = line.split("=", 1)
            key = normalize_key(key)
            if key not in KNOWN_KEYS:
                raise ConfigValueError(f"{path}:{number}: unknown key '{key}'")
            values[key] = value.strip()
    return values


def resolve_threads() -> int:
    """Worker cap from MVSC_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigValueError(f"{THREADS_ENV} must be an integer, got '{raw}'")
    if threads < 1:
        raise ConfigValueError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads


def build_config(values: Dict[str, Any], synthetic_default: bool = True) -> ExperimentConfig:
    """
    Turn flat key/value settings (config file merged with CLI overrides) into an ExperimentConfig.

    Without a dataset path the synthetic generator is used when synthetic_default is set.

    Raises:
        ConfigValueError: If a key is unknown or a value cannot be parsed
    """
    values = {normalize_key(k): v for k, v in values.items()}
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigValueError(f"Unknown setting(s): {', '.join(unknown)}")

    solver_kwargs = _convert(values, SOLVER_KEYS)
    synthetic_kwargs = _convert(values, SYNTHETIC_KEYS)
    experiment_kwargs = _convert(values, EXPERIMENT_KEYS)
    grids = _convert(values, GRID_KEYS)

    synthetic = None
    if experiment_kwargs.get("dataset_path") is None:
        if "c" not in synthetic_kwargs and "clusters" in experiment_kwargs:
            synthetic_kwargs["c"] = experiment_kwargs["clusters"]
        if synthetic_default:
            synthetic = SyntheticSpec(**synthetic_kwargs)
    elif synthetic_kwargs:
        raise ConfigValueError("Synthetic settings cannot be combined with a dataset path")

    if synthetic is not None and "view_dims" not in synthetic_kwargs and "V" in synthetic_kwargs:
        # default dims sized to the requested view count
        dims = tuple(max(synthetic.latent_dim, 12 - 2 * i) for i in range(synthetic.V))
        synthetic = replace(synthetic, view_dims=dims)

    config = ExperimentConfig(
        solver=SolverConfig(**solver_kwargs),
        synthetic=synthetic,
        threads=resolve_threads(),
        grids=grids,
        **experiment_kwargs,
    )
    logger.debug("Built config: %s", config)
    return config


def _convert(values: Dict[str, Any], table: Dict[str, tuple]) -> Dict[str, Any]:
    converted = {}
    for key, (convert, target) in table.items():
        if key not in values:
            continue
        try:
            converted[target] = convert(values[key])
        except ConfigError:
            raise
        except Exception as e:
            raise ConfigValueError(f"Invalid value for '{key}': {values[key]!r} ({str(e)})")
    return converted
