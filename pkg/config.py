"""
Lab Configuration

Precedence, highest first:
  1. explicit arguments (CLI flags, function parameters)
  2. a lab config file (TOML or JSON) with [assumptions], [universal], [guards]
  3. environment / .env, read once here
  4. built-in defaults below

Environment (see env_template.txt):
  CSBM_SNR_THREADS          - worker threads for trials and column blocks (default 1)
  CSBM_SNR_OUT              - output directory for reports (default out)
  CSBM_SNR_SEED             - master seed (default 20240601)
  CSBM_SNR_MAX_ENUMERATION  - raw walk-enumeration guard (default 1e8)
  LOG_LEVEL                 - DEBUG / INFO / WARNING / ERROR (default INFO)
  LOG_FILE                  - optional log file, appended to
"""

import json
import logging
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Type, TypeVar

from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

log = logging.getLogger(__name__)


def _env_int(name: str, default: int) -> Tuple[int, Optional[str]]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default, None
    try:
        return int(float(raw)), None
    except ValueError:
        return default, f"{name}={raw!r} is not a number, using {default}"


DEFAULT_THREADS, _threads_err = _env_int("CSBM_SNR_THREADS", 1)
DEFAULT_SEED, _seed_err = _env_int("CSBM_SNR_SEED", 20240601)
MAX_ENUMERATION, _enum_err = _env_int("CSBM_SNR_MAX_ENUMERATION", 100_000_000)
DEFAULT_OUT = os.getenv("CSBM_SNR_OUT", "out")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE", "")

ENV_WARNINGS = [e for e in (_threads_err, _seed_err, _enum_err) if e]

VERSION = "0.1.0"


# =============================================================================
# SECTION 1: CONSTANT SETS
# =============================================================================

@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the model assumptions A1-A5 (never inferred from data)."""
    c_B: float = 0.5
    C_B: float = 1.0
    delta: float = math.inf
    c_nu: float = 0.1
    c_pi: float = 0.5
    C_pi: float = 2.0
    C_mu: float = 2.0


@dataclass(frozen=True)
class UniversalConstants:
    """
    Numerical constants the theory leaves unpinned.

    C, c        - spectral concentration constants inside C_k
    c_nu_prime  - growth constant of the nu_n >= c' log n condition
    C1          - sub-Gaussian moment constant, E|Z|^r <= (C1 sigma sqrt(r))^r
    epsilon     - exponent slack in r_n(epsilon)
    """
    C: float = 3.0
    c: float = 1.0
    c_nu_prime: float = 1.0
    C1: float = 2.0
    epsilon: float = 0.5


@dataclass(frozen=True)
class Guards:
    max_enumeration: int = MAX_ENUMERATION
    walk_oracle_max_n: int = 60
    walk_oracle_max_k: int = 4
    walk_oracle_budget: int = 200_000
    class_oracle_max_k: int = 8
    mc_dense_max_n: int = 200
    dense_cutoff: int = 400
    chunk_size: int = 1 << 17
    opnorm_tol: float = 1e-8
    opnorm_max_iter: int = 10_000
    consistency_rtol: float = 1e-8
    anchor_rtol: float = 1e-9


@dataclass(frozen=True)
class LabConfig:
    assumptions: AssumptionConstants = field(default_factory=AssumptionConstants)
    universal: UniversalConstants = field(default_factory=UniversalConstants)
    guards: Guards = field(default_factory=Guards)


DEFAULT_CONFIG = LabConfig()


# =============================================================================
# SECTION 2: DOCUMENT LOADING
# =============================================================================

T = TypeVar("T")


def read_document(path: Any) -> Dict[str, Any]:
    """Read a TOML (primary) or JSON document into a dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: cannot parse ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: document root must be a table/object")
    return data


def check_keys(data: Dict[str, Any], allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")


def build_constants(cls: Type[T], data: Optional[Dict[str, Any]], where: str) -> T:
    """Build a frozen constant dataclass from a table, rejecting typos."""
    if not data:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    names = {f.name: f for f in fields(cls)}
    check_keys(data, names, where)
    values = {}
    for key, raw in data.items():
        kind = int if isinstance(getattr(cls(), key), int) else float
        try:
            values[key] = kind(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}.{key}: {raw!r} is not a {kind.__name__}") from e
    return cls(**values)


def config_from_dict(data: Dict[str, Any]) -> LabConfig:
    check_keys(data, ("assumptions", "universal", "guards"), "config")
    return LabConfig(
        assumptions=build_constants(AssumptionConstants, data.get("assumptions"), "assumptions"),
        universal=build_constants(UniversalConstants, data.get("universal"), "universal"),
        guards=build_constants(Guards, data.get("guards"), "guards"),
    )


def load_config(path: Any = None) -> LabConfig:
    if path is None:
        return DEFAULT_CONFIG
    return config_from_dict(read_document(path))


def resolve_threads(value: Optional[int]) -> int:
    threads = DEFAULT_THREADS if value is None else int(value)
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    return threads


# =============================================================================
# SECTION 3: LOGGING
# =============================================================================

class _TagFormatter(logging.Formatter):
    """[module] message, with the level spelled out for warnings and errors."""

    def format(self, record: logging.LogRecord) -> str:
        tag = record.name.rsplit(".", 1)[-1]
        message = record.getMessage()
        if record.levelno >= logging.WARNING:
            message = f"{record.levelname}: {message}"
        line = f"[{tag}] {message}"
        if record.exc_info:
            line += "\n" + self.formatException(record.exc_info)
        return line


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Install the tagged console handler (and optional file sink) once."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_csbm_lab", False):
            root.removeHandler(handler)

    name = (level or LOG_LEVEL or "INFO").upper()
    root.setLevel(getattr(logging, name, logging.INFO))

    handlers = [logging.StreamHandler()]
    target = log_file if log_file is not None else LOG_FILE
    if target:
        handlers.append(logging.FileHandler(target, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(_TagFormatter())
        handler._csbm_lab = True
        root.addHandler(handler)

    for warning in ENV_WARNINGS:
        log.warning(warning)
