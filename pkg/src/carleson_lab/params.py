"""Scalar parameters, closed-form regularity thresholds and the config file format.

All threshold formulas are evaluated in exact rational arithmetic
(:class:`fractions.Fraction`).  Floats passed in are converted through their
decimal ``repr`` so that ``0.3`` means ``3/10`` rather than the nearest binary
double.
"""
from __future__ import annotations

import dataclasses
import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .errors import ConfigError, ParameterError

Number = int | float | Fraction


def as_fraction(x: Number | str) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float (via repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise ParameterError("boolean is not a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ParameterError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    return Fraction(str(x).strip())


def _check_dim(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def sharp_exponent(n: int) -> Fraction:
    """Regularity n/(2(n+1)) below which the maximal estimate fails."""
    n = _check_dim(n)
    return Fraction(n, 2 * (n + 1))


def alpha_range(n: int) -> tuple[Fraction, Fraction]:
    """Admissible Hausdorff exponents [(3n+1)/4, n]."""
    n = _check_dim(n)
    return Fraction(3 * n + 1, 4), Fraction(n)


def theorem1_threshold(n: int, alpha: Number) -> Fraction:
    """Regularity below which divergence happens on a set of positive alpha-measure."""
    n = _check_dim(n)
    a = as_fraction(alpha)
    lo, hi = alpha_range(n)
    if not lo <= a <= hi:
        raise ParameterError(f"alpha={alpha} outside [{lo}, {hi}] for n={n}")
    return Fraction(n, 2 * (n + 1)) + Fraction((n - 1), 2 * (n + 1)) * (n - a)


def dimension_lower_bound(n: int, s: Number) -> Fraction:
    """Piecewise lower bound for the dimension of the divergence set at regularity s.

    For n = 1 the two middle intervals are empty: s < 1/4 gives 1 and
    1/4 <= s <= 1/2 gives 1 - 2s.
    """
    n = _check_dim(n)
    q = as_fraction(s)
    if not 0 <= q <= Fraction(n, 2):
        raise ParameterError(f"s={s} outside [0, {Fraction(n, 2)}]")
    first = Fraction(n, 2 * (n + 1))
    if q < first:
        return Fraction(n)
    if n == 1:
        return 1 - 2 * q
    if q < Fraction(n + 1, 8):
        return n + Fraction(n, n - 1) - Fraction(2 * (n + 1), n - 1) * q
    if q < Fraction(n, 4):
        return n + 1 - Fraction(2 * (n + 2), n) * q
    return n - 2 * q


def beta_interval(n: int, alpha: Number) -> tuple[Fraction, Fraction]:
    """Open interval of content exponents used in the fractal case."""
    n = _check_dim(n)
    a = as_fraction(alpha)
    return Fraction(n - 1, 2 * (n + 1)) * (2 * a + 1), a - 1


def sigma_upper(n: int, alpha: Number) -> Fraction:
    """Strict upper bound (1 + 2(n - alpha)) / (2(n + 1)) for the lattice exponent."""
    a = as_fraction(alpha)
    return (1 + 2 * (n - a)) / (2 * (n + 1))


def lambda_from_M(M: int, sigma: float) -> float:
    """Scale base 2^{M/(1-sigma)}."""
    return 2.0 ** (M / (1.0 - sigma))


@dataclass(frozen=True)
class ExperimentParams:
    """All scalar inputs of a run.

    ``lam`` is written ``lambda`` in config files.  If ``M`` is given, ``lam``
    must equal ``2**(M/(1-sigma))``; a bare ``lam`` is accepted for desk-scale
    work where no integer ``M`` reproduces a convenient base such as 16.
    """

    n: int = 2
    R: float = 4096.0
    sigma: float = 0.1
    delta_w: float = 0.02
    lam: float | None = None
    M: int | None = None
    J: int = 3
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    rho: float = 0.05
    eps1: float = 0.05
    eps2: float = 0.1
    s: float | None = None
    N_cut: float | None = None
    seed: int = 0

    def __post_init__(self):
        n = _check_dim(self.n)
        object.__setattr__(self, "n", n)
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(n))
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.alpha) - 1.0)
        if self.lam is None:
            lam = lambda_from_M(self.M, self.sigma) if self.M is not None else 16.0
            object.__setattr__(self, "lam", lam)
        if self.N_cut is None:
            object.__setattr__(self, "N_cut", 2 * math.pi * self.lam ** (2 * self.J))
        self.validate()

    def validate(self) -> None:
        n = self.n
        if not self.R > 4:
            raise ParameterError(f"R must exceed 4, got {self.R}")
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        lo, hi = alpha_range(n)
        a = as_fraction(self.alpha)
        if not lo <= a <= hi:
            raise ParameterError(f"alpha={self.alpha} outside [{lo}, {hi}]")
        if self.sigma >= 0.25:
            raise ParameterError(f"sigma={self.sigma} must be < 1/4 when alpha >= (3n+1)/4")
        sig_hi = sigma_upper(n, a)
        if not as_fraction(self.sigma) < sig_hi:
            raise ParameterError(f"sigma={self.sigma} must be < {sig_hi} (= (1+2(n-alpha))/(2(n+1)))")
        if not 0 < self.delta_w < self.sigma / 4:
            raise ParameterError(f"delta_w={self.delta_w} must lie in (0, sigma/4)")
        if self.M is not None:
            if int(self.M) != self.M:
                raise ParameterError("M must be an integer")
            expect = lambda_from_M(int(self.M), self.sigma)
            if not math.isclose(self.lam, expect, rel_tol=1e-12):
                raise ParameterError(f"lambda={self.lam} differs from 2^(M/(1-sigma))={expect}")
        if not self.lam > 1:
            raise ParameterError(f"lambda must exceed 1, got {self.lam}")
        if int(self.J) != self.J or self.J < 1:
            raise ParameterError(f"J must be a positive integer, got {self.J}")
        if n >= 2:
            d = n - 1
            g = as_fraction(self.gamma)
            if not Fraction(3 * d, 4) <= g <= d:
                raise ParameterError(f"gamma={self.gamma} outside [3d/4, d] with d={d}")
        if self.beta is not None and a < n:
            b_lo, b_hi = beta_interval(n, a)
            if not b_lo < as_fraction(self.beta) < b_hi:
                raise ParameterError(f"beta={self.beta} outside ({float(b_lo)}, {float(b_hi)})")
        for name in ("rho", "eps1", "eps2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterError(f"{name}={v} must lie in (0, 1)")
        if not self.N_cut > 0:
            raise ParameterError("N_cut must be positive")
        if self.s is not None and self.s < 0:
            raise ParameterError("s must be nonnegative")

    @property
    def d(self) -> int:
        return self.n - 1

    def u0_threshold(self) -> float:
        """Largest s for which the multi-scale data lies in H^s."""
        return (self.n - 1) * self.sigma / 2 + 0.25 - self.delta_w

    def replace(self, **changes) -> "ExperimentParams":
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        if ("J" in changes or "lam" in changes) and "N_cut" not in changes:
            changes["N_cut"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out


PARAM_KEYS = {f.name for f in dataclasses.fields(ExperimentParams)} - {"lam"} | {"lambda"}
_INT_KEYS = {"n", "M", "J", "seed"}


def parse_scalar(text: str) -> Any:
    """Parse one config value: int, float, ``pi``, ``a*b`` product, ``a^b`` power, ``p/q`` ratio,
    bool or bare word."""
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    if low == "pi":
        return math.pi
    factors = re.split(r"(?<!\*)\*(?!\*)", t)
    if len(factors) > 1:
        vals = [parse_scalar(f) for f in factors]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ValueError(f"bad product expression {t!r}")
        return math.prod(vals)
    for op in ("^", "**"):
        if op in t:
            base, _, exp = t.partition(op)
            b, e = parse_scalar(base), parse_scalar(exp)
            if not isinstance(b, (int, float)) or not isinstance(e, (int, float)):
                raise ValueError(f"bad power expression {t!r}")
            v = b**e
            return v
    if "/" in t:
        p, _, q = t.partition("/")
        return float(Fraction(p.strip()) / Fraction(q.strip()))
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    if t and all(ch.isalnum() or ch in "_-." for ch in t):
        return t
    raise ValueError(f"cannot parse value {t!r}")


def parse_value(text: str) -> Any:
    """Scalar or comma-separated list of scalars; an empty value means ``None``."""
    if not text.strip():
        return None
    if "," in text:
        return [parse_scalar(p) for p in text.split(",") if p.strip()]
    return parse_scalar(text)


@dataclass
class ConfigDocument:
    """A parsed config file: global parameters, experiment list and per-experiment sections."""

    params: ExperimentParams
    experiments: list[str] = field(default_factory=list)
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    line_of: dict[tuple[str, str], int] = field(default_factory=dict)
    source: str = ""


def _coerce_param(key: str, value: Any, line: int) -> Any:
    if value is None:
        return None
    if isinstance(value, list):
        raise ConfigError(f"key {key!r} takes a single value", line)
    if isinstance(value, str) or isinstance(value, bool):
        raise ConfigError(f"key {key!r} needs a number, got {value!r}", line)
    if key in _INT_KEYS:
        if float(value) != int(value):
            raise ConfigError(f"key {key!r} needs an integer", line)
        return int(value)
    return float(value)


def parse_config(text: str, section_keys: dict[str, set[str]] | None = None,
                 source: str = "<string>") -> ConfigDocument:
    """Parse ``key = value`` lines with optional ``[section]`` headers.

    Top-level keys are the :class:`ExperimentParams` fields plus ``experiments``.
    ``section_keys`` maps allowed section names to their allowed keys.
    Unknown keys or sections raise :class:`ConfigError` naming the line.
    """
    section_keys = section_keys or {}
    top: dict[str, Any] = {}
    experiments: list[str] = []
    sections: dict[str, dict[str, Any]] = {}
    line_of: dict[tuple[str, str], int] = {}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in section_keys:
                raise ConfigError(f"unknown section [{name}]", lineno)
            current = name
            sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"malformed key {key!r}", lineno)
        try:
            value = parse_value(val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        if (current, key) in line_of:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        line_of[(current, key)] = lineno
        if current:
            if key not in section_keys[current]:
                raise ConfigError(f"unknown key {key!r} in section [{current}]", lineno)
            sections[current][key] = value
        elif key == "experiments":
            names = value if isinstance(value, list) else ([] if value is None else [value])
            for nm in names:
                if not isinstance(nm, str):
                    raise ConfigError(f"experiment names must be words, got {nm!r}", lineno)
            experiments = list(names)
        elif key in PARAM_KEYS:
            top["lam" if key == "lambda" else key] = _coerce_param(key, value, lineno)
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)
    try:
        params = ExperimentParams(**top)
    except ParameterError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None
    return ConfigDocument(params, experiments, sections, line_of, source)


def load_config(path: str | Path, section_keys: dict[str, set[str]] | None = None) -> ConfigDocument:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), section_keys, source=str(p))


def sparse_comb_warning(count: int, level: int | None = None) -> None:
    """Warn when a frequency comb has fewer than three points per coordinate."""
    if count < 3:
        where = f" at level {level}" if level is not None else ""
        warnings.warn(f"comb too sparse for density experiments{where} ({count} points)",
                      RuntimeWarning, stacklevel=3)
