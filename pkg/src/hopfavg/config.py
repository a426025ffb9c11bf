"""Flat ``key = value`` experiment configuration.

Kernels are written with indexed prefixes::

    kernel.span = 1
    kernel.atom.1.loc = -1
    kernel.atom.1.weight = -1.5707963267948966
    kernel.density.1.a = -1
    kernel.density.1.b = -0.5
    kernel.density.1.value = 0.2

The multiplicative noise kernel uses the same layout under ``noise.L1``.
Lines starting with ``#`` are comments.
"""

import math
import re
from dataclasses import dataclass, fields, replace
from typing import Optional

from .dde_core.kernel import MeasureKernel
from .errors import ConfigError
from .perturbation import (
    Additive,
    DelayPolynomial,
    LinearMultiplicative,
    PerturbationSpec,
)

_INDEXED = re.compile(r"^(kernel|noise\.L1)\.(atom|density)\.(\d+)\.(\w+)$")
_ATOM_KEYS = ("loc", "weight")
_DENSITY_KEYS = ("a", "b", "value")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment; every field has a flat key of the same name.

    The kernel lives in ``atoms``/``densities`` and the multiplicative noise
    kernel in ``l1_atoms``/``l1_densities``.
    """

    span: float = 1.0
    atoms: tuple = ()
    densities: tuple = ()
    noise: str = "additive"
    sigma: float = 1.0
    l1_atoms: tuple = ()
    l1_densities: tuple = ()
    gamma_c: float = 0.0
    cubic_delay: float = -1.0
    gamma_q: float = 0.0
    quad_delay: float = -1.0
    epsilon: float = 0.025
    H_star: float = 1.5
    H_lower: Optional[float] = None
    T_end: float = 2.0
    N_samp: int = 4000
    hbar0: float = 0.72
    base_seed: int = 0
    grid_n: Optional[int] = None
    reduced_dt: Optional[float] = None
    scaling_eps: tuple = (0.1, 0.05, 0.025)
    scaling_T_end: float = 0.5
    scaling_paths: int = 16
    lyapunov_T: float = 1.0e5
    lyapunov_paths: int = 5
    lyapunov_points: int = 200
    out_dir: str = "out"

    # ------------------------------------------------------------ objects

    def kernel(self):
        return MeasureKernel(self.span, self.atoms, self.densities)

    def L1(self):
        if self.noise != "multiplicative":
            return None
        return MeasureKernel(self.span, self.l1_atoms, self.l1_densities)

    def perturbation(self, epsilon=None):
        eps = self.epsilon if epsilon is None else epsilon
        G = (
            DelayPolynomial.monomial(self.gamma_c, self.cubic_delay, 3)
            if self.gamma_c
            else DelayPolynomial.zero()
        )
        Gq = DelayPolynomial.monomial(self.gamma_q, self.quad_delay, 2) if self.gamma_q else None
        noise = LinearMultiplicative(self.L1()) if self.noise == "multiplicative" else Additive(self.sigma)
        return PerturbationSpec(eps, noise, G, Gq)

    def with_seed(self, seed):
        return replace(self, base_seed=int(seed))

    # ------------------------------------------------------------ text

    def to_text(self):
        lines = [f"kernel.span = {_fmt(self.span)}"]
        lines += _kernel_lines("kernel", self.atoms, self.densities)
        lines.append(f"noise.type = {self.noise}")
        if self.noise == "additive":
            lines.append(f"noise.sigma = {_fmt(self.sigma)}")
        else:
            lines += _kernel_lines("noise.L1", self.l1_atoms, self.l1_densities)
        for f in fields(self):
            if f.name in _STRUCTURED:
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(_fmt(x) for x in v)
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"


_STRUCTURED = {"span", "atoms", "densities", "noise", "sigma", "l1_atoms", "l1_densities"}
_INT_FIELDS = {"N_samp", "base_seed", "grid_n", "scaling_paths", "lyapunov_paths", "lyapunov_points"}
_STR_FIELDS = {"out_dir"}
_TUPLE_FIELDS = {"scaling_eps"}


def _fmt(v):
    if isinstance(v, bool):
        raise TypeError("booleans are not config values")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _kernel_lines(prefix, atoms, densities):
    out = []
    for i, (loc, w) in enumerate(atoms, 1):
        out.append(f"{prefix}.atom.{i}.loc = {_fmt(float(loc))}")
        out.append(f"{prefix}.atom.{i}.weight = {_fmt(float(w))}")
    for i, (a, b, c) in enumerate(densities, 1):
        out.append(f"{prefix}.density.{i}.a = {_fmt(float(a))}")
        out.append(f"{prefix}.density.{i}.b = {_fmt(float(b))}")
        out.append(f"{prefix}.density.{i}.value = {_fmt(float(c))}")
    return out


def _float(raw, line, key):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", line, key) from None
    if not math.isfinite(v):
        raise ConfigError("value must be finite", line, key)
    return v


def _int(raw, line, key):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", line, key) from None


def _collect(groups, kind, line_of, prefix):
    keys = _ATOM_KEYS if kind == "atom" else _DENSITY_KEYS
    out = []
    for idx in sorted(groups):
        entry = groups[idx]
        missing = [k for k in keys if k not in entry]
        if missing:
            key = f"{prefix}.{kind}.{idx}.{missing[0]}"
            raise ConfigError("missing field", line_of.get((prefix, kind, idx)), key)
        out.append(tuple(entry[k] for k in keys))
    return tuple(out)


def parse_config(text):
    """Parse config text.

    Raises
    ------
    ConfigError
        With the offending line number and key.
    """
    seen = {}
    values = {}
    indexed = {}
    line_of = {}
    names = {f.name for f in fields(ExperimentConfig)} - _STRUCTURED
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first on line {seen[key]})", lineno, key)
        seen[key] = lineno
        m = _INDEXED.match(key)
        if m:
            prefix, kind, idx, field_name = m.group(1), m.group(2), int(m.group(3)), m.group(4)
            allowed = _ATOM_KEYS if kind == "atom" else _DENSITY_KEYS
            if field_name not in allowed:
                raise ConfigError(f"unknown {kind} field", lineno, key)
            indexed.setdefault((prefix, kind), {}).setdefault(idx, {})[field_name] = _float(val, lineno, key)
            line_of.setdefault((prefix, kind, idx), lineno)
        elif key == "kernel.span":
            values["span"] = _float(val, lineno, key)
        elif key == "noise.type":
            if val not in ("additive", "multiplicative"):
                raise ConfigError("noise.type must be additive or multiplicative", lineno, key)
            values["noise"] = val
        elif key == "noise.sigma":
            values["sigma"] = _float(val, lineno, key)
        elif key in names:
            if key in _INT_FIELDS:
                values[key] = _int(val, lineno, key)
            elif key in _STR_FIELDS:
                values[key] = val
            elif key in _TUPLE_FIELDS:
                parts = [p.strip() for p in val.split(",") if p.strip()]
                values[key] = tuple(_float(p, lineno, key) for p in parts)
            else:
                values[key] = _float(val, lineno, key)
        else:
            raise ConfigError("unknown key", lineno, key)
    for prefix, target in (("kernel", ""), ("noise.L1", "l1_")):
        for kind, name in (("atom", "atoms"), ("density", "densities")):
            groups = indexed.get((prefix, kind))
            if groups:
                values[target + name] = _collect(groups, kind, line_of, prefix)
    if "span" not in values:
        raise ConfigError("missing kernel.span", key="kernel.span")
    eps = values.get("epsilon", ExperimentConfig.epsilon)
    if not (0.0 < eps <= 0.5):
        raise ConfigError("epsilon must lie in (0, 0.5]", seen.get("epsilon"), "epsilon")
    if values.get("noise") == "multiplicative":
        if "sigma" in values:
            raise ConfigError("noise.sigma is for additive noise", seen["noise.sigma"], "noise.sigma")
    elif values.get("l1_atoms") or values.get("l1_densities"):
        raise ConfigError("noise.L1 needs noise.type = multiplicative", key="noise.type")
    for key in ("N_samp", "scaling_paths", "lyapunov_paths", "lyapunov_points"):
        if key in values and values[key] < 1:
            raise ConfigError("must be >= 1", seen[key], key)
    if values.get("base_seed", 0) < 0:
        raise ConfigError("must be >= 0", seen["base_seed"], "base_seed")
    for key in ("H_star", "T_end", "scaling_T_end", "lyapunov_T", "sigma"):
        if key in values and values[key] <= 0:
            raise ConfigError("must be positive", seen.get(key if key != "sigma" else "noise.sigma"), key)
    try:
        cfg = ExperimentConfig(**values)
        cfg.kernel()
        cfg.perturbation().check_span(cfg.span)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
