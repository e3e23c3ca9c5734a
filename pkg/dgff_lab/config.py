"""
Run Configuration Module

Text configuration for experiment runs: ``key = value`` lines grouped under
optional ``[run]``, ``[domain]``, ``[model]``, ``[limit]`` and ``[output]``
headers. Keys are unique across the whole file; the sections only organise
it. Lists are comma separated.

Values are read with ``configparser``; a line scan of the same text supplies
the line number of every key, so that duplicate and unknown keys can be
reported with their positions. Validation goes through the pydantic
``RunConfig`` model and every problem is collected before a single
``ConfigError`` is raised.

Example:

    [run]
    experiment = free-energy
    seed = 1

    [domain]
    domain = unit-square
    N = 32

    [model]
    beta = 1.0
"""

import configparser
import logging
import re
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from dgff_lab.constants import BETA_C
from dgff_lab.errors import ConfigError
from dgff_lab.rng import MAX_SEED

logger = logging.getLogger(__name__)

Violation = Tuple[Optional[int], str]

EXPERIMENTS = (
    "green",
    "sample-field",
    "free-energy",
    "high-points",
    "overlap",
    "mean-overlap",
    "derivative-check",
    "limit-q",
    "q-infinity",
    "theorem2",
    "dominance",
    "lemma32",
    "shift",
    "ibp",
    "decoration",
)
VERIFY_EXPERIMENTS = ("lemma32", "shift", "ibp", "decoration")
LIMIT_EXPERIMENTS = ("limit-q", "q-infinity", "theorem2", "dominance", "shift")
LATTICE_EXPERIMENTS = (
    "green",
    "sample-field",
    "free-energy",
    "high-points",
    "overlap",
    "mean-overlap",
    "derivative-check",
)

# key -> section used when serializing
SECTIONS: Dict[str, str] = {
    "experiment": "run",
    "seed": "run",
    "threads": "run",
    "green_cap": "run",
    "domain": "domain",
    "center": "domain",
    "radius": "domain",
    "r_in": "domain",
    "r_out": "domain",
    "N": "domain",
    "delta": "domain",
    "side": "domain",
    "beta": "model",
    "beta_prime": "model",
    "replicas": "model",
    "pairs": "model",
    "walks": "model",
    "samples": "model",
    "lam": "model",
    "r": "model",
    "delta_beta": "model",
    "model": "model",
    "c": "model",
    "c_values": "model",
    "c_probs": "model",
    "r_ball": "model",
    "R_ball": "model",
    "burn_in": "model",
    "sweeps": "model",
    "L": "limit",
    "eps": "limit",
    "truncation": "limit",
    "n": "limit",
    "bank": "limit",
    "offset": "limit",
    "p": "limit",
    "q": "limit",
    "a_values": "limit",
    "a_probs": "limit",
    "ibp_function": "limit",
    "ibp_dim": "limit",
    "mc_samples": "limit",
    "out": "output",
    "formats": "output",
}
SECTION_ORDER = ("run", "domain", "model", "limit", "output")

LIST_KEYS = (
    "center",
    "N",
    "beta",
    "beta_prime",
    "c_values",
    "c_probs",
    "formats",
    "p",
    "q",
    "a_values",
    "a_probs",
)

PositiveInt = Annotated[int, Field(ge=1)]
PositiveFloat = Annotated[float, Field(gt=0)]


class RunConfig(BaseModel):
    """Validated parameters of one experiment run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    seed: int = Field(ge=0, le=MAX_SEED)
    threads: int = Field(default=1, ge=1)
    green_cap: int = Field(default=5000, ge=1)

    domain: Literal["unit-square", "disc", "annulus"] = "unit-square"
    center: Tuple[float, float] = (0.5, 0.5)
    radius: float = Field(default=0.5, gt=0)
    r_in: float = Field(default=0.2, gt=0)
    r_out: float = Field(default=0.5, gt=0)
    N: List[PositiveInt] = Field(default_factory=list)
    delta: float = Field(default=0.5, gt=0, lt=1)
    side: int = Field(default=8, ge=1)

    beta: List[PositiveFloat] = Field(default_factory=list)
    beta_prime: List[PositiveFloat] = Field(default_factory=list)
    replicas: int = Field(default=100, ge=1)
    pairs: int = Field(default=100, ge=1)
    walks: int = Field(default=10_000, ge=1)
    samples: int = Field(default=1000, ge=1)
    lam: float = Field(default=0.5, gt=0, lt=1)
    r: float = Field(default=2.0, gt=0)
    delta_beta: float = Field(default=0.05, gt=0)
    model: Literal["constant", "two-site", "dgff-ball"] = "two-site"
    c: float = Field(default=1.0, ge=0)
    c_values: List[Annotated[float, Field(ge=0)]] = Field(default_factory=list)
    c_probs: List[Annotated[float, Field(ge=0)]] = Field(default_factory=list)
    r_ball: float = Field(default=2.0, gt=0)
    R_ball: float = Field(default=8.0, gt=0)
    burn_in: int = Field(default=200, ge=0)
    sweeps: int = Field(default=5, ge=1)

    L: Optional[PositiveFloat] = None
    eps: float = Field(default=1e-5, gt=0)
    truncation: Literal["compensated", "mean"] = "compensated"
    n: int = Field(default=10_000, ge=1)
    bank: Optional[PositiveInt] = None
    offset: float = 0.0
    p: List[str] = Field(default_factory=lambda: ["2/3", "1/3"])
    q: List[str] = Field(default_factory=lambda: ["1", "0"])
    a_values: List[str] = Field(default_factory=lambda: ["1", "2"])
    a_probs: List[str] = Field(default_factory=lambda: ["1/2", "1/2"])
    ibp_function: Literal["all", "linear", "square", "product", "softmax"] = "all"
    ibp_dim: int = Field(default=3, ge=1, le=6)
    mc_samples: int = Field(default=100_000, ge=1)

    out: str = "out"
    formats: List[Literal["csv", "json", "svg"]] = Field(default_factory=lambda: ["csv", "json", "svg"])

    @field_validator(*LIST_KEYS, mode="before")
    @classmethod
    def _split_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("p", "q", "a_values", "a_probs")
    @classmethod
    def _rational(cls, value: List[str]) -> List[str]:
        for item in value:
            try:
                Fraction(item)
            except (ValueError, ZeroDivisionError) as e:
                raise ValueError(f"not a rational number: {item!r}") from e
        return value

    @property
    def is_verify(self) -> bool:
        return self.experiment in VERIFY_EXPERIMENTS

    @property
    def beta_pairs(self) -> List[Tuple[float, float]]:
        """(beta, beta') pairs; beta' falls back to beta when not given."""
        partners = self.beta_prime or self.beta
        if len(partners) == 1:
            partners = partners * len(self.beta)
        return list(zip(self.beta, partners))

    def fractions(self, key: str) -> List[Fraction]:
        return [Fraction(v) for v in getattr(self, key)]


# ---------------------------------------------------------------- parsing

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:\s][^=:]*?)\s*[=:]")


def _scan(text: str) -> Tuple[Dict[str, int], List[Violation], bool]:
    """
    Line numbers of keys, problems visible from the text alone, and whether
    any key appears before the first header.
    """
    lines: Dict[str, int] = {}
    violations: List[Violation] = []
    seen_header = False
    leading_keys = False
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        section = _SECTION_RE.match(raw)
        if section:
            seen_header = True
            name = section.group(1).strip()
            if name not in SECTION_ORDER:
                violations.append((number, f"unknown section [{name}]"))
            continue
        if raw[:1].isspace() and lines:
            # continuation line of the previous value
            continue
        match = _KEY_RE.match(raw)
        if not match:
            violations.append((number, f"expected 'key = value', got {stripped!r}"))
            continue
        key = match.group(1)
        leading_keys = leading_keys or not seen_header
        if key in lines:
            violations.append((number, f"duplicate key '{key}' (first defined on line {lines[key]}, again on line {number})"))
            continue
        if key not in SECTIONS:
            violations.append((number, f"unknown key '{key}'"))
        lines[key] = number
    return lines, violations, leading_keys


def _read_values(text: str, leading_keys: bool, violations: List[Violation]) -> Dict[str, str]:
    parser = configparser.ConfigParser(
        strict=False, interpolation=None, inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    offset = 1 if leading_keys else 0
    source = ("[run]\n" + text) if leading_keys else text
    try:
        parser.read_string(source)
    except configparser.Error as e:
        lineno = getattr(e, "lineno", None)
        violations.append((lineno - offset if lineno else None, f"unreadable configuration: {e.message}"))
        return {}
    values: Dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            values.setdefault(key, value)
    return values


def _float_list(value: Any) -> List[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if isinstance(value, (int, float)):
        value = [value]
    out = []
    for item in value:
        try:
            out.append(float(item))
        except (TypeError, ValueError):
            continue
    return out


def _cross_field(raw: Dict[str, Any], lines: Dict[str, int]) -> List[Violation]:
    """Rules spanning several keys; checked on raw values so they always run."""
    violations: List[Violation] = []
    experiment = raw.get("experiment")
    if isinstance(experiment, str):
        experiment = experiment.strip()
    if experiment in LATTICE_EXPERIMENTS:
        needed = ("N",) if experiment in ("green", "sample-field") else ("N", "beta")
        for key in needed:
            if key not in raw or not _float_list(raw[key]):
                violations.append((None, f"missing required key '{key}' for experiment {experiment}"))
    if experiment in LIMIT_EXPERIMENTS:
        if "beta" not in raw or not _float_list(raw["beta"]):
            violations.append((None, f"missing required key 'beta' for experiment {experiment}"))
        for key in ("beta", "beta_prime"):
            for value in _float_list(raw.get(key, [])):
                if not value > BETA_C:
                    violations.append((
                        lines.get(key),
                        f"{key} = {value:g} must exceed beta_c = sqrt(2 pi) = {BETA_C:.6f} for experiment {experiment}",
                    ))
    if experiment == "theorem2":
        if not _float_list(raw.get("beta_prime", [])):
            violations.append((None, "missing required key 'beta_prime' for experiment theorem2"))
    if experiment == "decoration" or raw.get("model", "").strip() == "dgff-ball":
        r_ball = _float_list(raw.get("r_ball", [2.0]))
        R_ball = _float_list(raw.get("R_ball", [8.0]))
        if r_ball and R_ball and r_ball[0] > R_ball[0]:
            violations.append((lines.get("r_ball"), f"r_ball = {r_ball[0]:g} must not exceed R_ball = {R_ball[0]:g}"))
    c_values = _float_list(raw.get("c_values", []))
    c_probs = _float_list(raw.get("c_probs", []))
    if c_probs and len(c_probs) != len(c_values):
        violations.append((lines.get("c_probs"), "c_probs must have one entry per c_values entry"))
    return violations


def _validate(raw: Dict[str, Any], lines: Dict[str, int], violations: List[Violation]) -> RunConfig:
    known = {k: v for k, v in raw.items() if k in SECTIONS}
    for key in ("experiment", "seed"):
        if key not in known:
            violations.append((None, f"missing required key '{key}'"))
    config: Optional[RunConfig] = None
    try:
        config = RunConfig.model_validate(known)
    except ValidationError as e:
        for error in e.errors():
            key = str(error["loc"][0]) if error["loc"] else ""
            if error["type"] == "missing":
                continue
            violations.append((lines.get(key), f"{key}: {error['msg']}"))
    violations.extend(_cross_field(known, lines))
    if violations or config is None:
        ordered = sorted(set(violations), key=lambda v: (v[0] is None, v[0] or 0, v[1]))
        for line, message in ordered:
            logger.debug(f"Configuration violation (line {line}): {message}")
        raise ConfigError(ordered)
    return config


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a configuration text.

    Args:
        text: Configuration in ``key = value`` form with optional section headers.

    Returns:
        RunConfig: The validated configuration with defaults filled in.

    Raises:
        ConfigError: With every violation found, each with its line number when
        one applies.
    """
    lines, violations, leading_keys = _scan(text)
    values = _read_values(text, leading_keys, violations)
    return _validate(values, lines, violations)


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to read configuration {path}: {e}")
        raise ConfigError([(None, f"cannot read configuration file {path}: {e}")]) from e
    return parse_config(text)


def _format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_values(config: RunConfig) -> Dict[str, str]:
    """Every set key of ``config`` as its text form."""
    return {
        key: _format_value(value)
        for key, value in config.model_dump().items()
        if value is not None
    }


def serialize_config(config: RunConfig) -> str:
    """
    Canonical text of a configuration.

    ``parse_config(serialize_config(config)) == config`` for every valid config.
    """
    values = config_values(config)
    blocks = []
    for section in SECTION_ORDER:
        keys = [k for k in SECTIONS if SECTIONS[k] == section and k in values]
        if keys:
            body = "\n".join(f"{k} = {values[k]}" for k in keys)
            blocks.append(f"[{section}]\n{body}\n")
    return "\n".join(blocks)


def apply_overrides(config: Optional[RunConfig], overrides: Iterable[str]) -> RunConfig:
    """
    Apply ``key=value`` overrides (command-line ``--set`` and dedicated flags).

    Args:
        config: Base configuration, or None to build one from the overrides alone.
        overrides: Items of the form ``key=value``.

    Raises:
        ConfigError: If an override is malformed, names an unknown key, or the
        result does not validate.
    """
    raw: Dict[str, Any] = config_values(config) if config is not None else {}
    violations: List[Violation] = []
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            violations.append((None, f"override must look like key=value: {item!r}"))
            continue
        if key not in SECTIONS:
            violations.append((None, f"unknown key '{key}' in override {item!r}"))
            continue
        raw[key] = value.strip()
    return _validate(raw, {}, violations)
