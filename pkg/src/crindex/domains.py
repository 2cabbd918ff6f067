"""Domain specifications, the builtin domain library and the ``.dom``/``.map`` file formats.

Domain file (one statement per line, ``#`` starts a comment)::

    dim = 2
    rho = "abs2(z1) + abs2(z2) - 1"
    param a = 1.5
    bbox = [-1.2..1.2; -1.2..1.2; -1.2..1.2; -1.2..1.2]

or, to instantiate a builtin::

    builtin = worm
    param beta = 2.0

``bbox`` lists one ``lo..hi`` range per real coordinate ``x1; y1; x2; y2; ...``.

Map file::

    dim_in = 2
    dim_out = 2
    param t = 0.3
    f1 = "(cos(t) + I*sin(t)) * z1"
    f2 = "z2"
    inverse {
      f1 = "(cos(t) - I*sin(t)) * z1"
      f2 = "z2"
    }
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .expr import (Binary, Expr, Num, Pow, Unary, Var, eval_expr, parse, to_source,
                   validate_real)
from .jet import jet_eval, to_wirtinger

REAL_TOL = 1e-12

# Worm cutoff: phi(s) = WORM_CAP * (ramp(-s)^WORM_POWER + ramp(s - (2 beta - pi))^WORM_POWER)
WORM_CAP = 1.0
WORM_POWER = 4
# log-cos profiles offered to the psi optimizer, as fractions of pi / (2 beta - pi)
WORM_PROFILE_FRACTIONS = (0.8, 0.9, 0.95, 0.98)


@dataclass
class DomainSpec:
    n: int
    rho: Expr
    params: dict[str, float] = field(default_factory=dict)
    bbox: np.ndarray = None
    name: str = "custom"
    # domain-aware additions to the psi basis: (label, expression)
    psi_extras: list[tuple[str, Expr]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("complex dimension must be >= 2")
        if self.rho.n != self.n:
            raise ValidationError("rho dimension does not match domain dimension")
        self.bbox = np.asarray(self.bbox, dtype=float)
        if self.bbox.shape != (2 * self.n, 2) or np.any(self.bbox[:, 1] <= self.bbox[:, 0]):
            raise ValidationError(f"bbox must have {2 * self.n} nonempty ranges")
        self.params = {k: float(v) for k, v in self.params.items()}

    def eval(self, z, strict: bool = True):
        return eval_expr(self.rho, z, self.params, strict=strict)

    def jet(self, z, order: int = 3, strict: bool = True):
        return jet_eval(self.rho, z, self.params, order, strict=strict)

    def wirtinger(self, z, order: int = 3):
        return to_wirtinger(jet_eval(self.rho, z, self.params, order))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox[:, 1] - self.bbox[:, 0]))

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "rho": str(self.rho),
                "params": dict(self.params), "bbox": self.bbox.tolist(), **self.meta}


def check_real(spec: DomainSpec, samples: int = 1000, seed: int = 0) -> float:
    resid = validate_real(spec.rho, spec.bbox, spec.params, samples, seed)
    if resid > REAL_TOL:
        raise ValidationError(f"rho is not real-valued (max |Im| = {resid:.3e})")
    return resid


# ------------------------------------------------------------- builtins


def _abs2(j: int):
    return Unary("abs2", Var(j))


def _sum(nodes):
    out = nodes[0]
    for node in nodes[1:]:
        out = Binary("add", out, node)
    return out


def _box(n: int, half: float) -> np.ndarray:
    return np.array([[-half, half]] * (2 * n))


def ball(n: int = 2) -> DomainSpec:
    root = Binary("sub", _sum([_abs2(j) for j in range(1, n + 1)]), Num(1.0))
    return DomainSpec(n, Expr(root, n), {}, _box(n, 1.25), name="ball")


def ellipsoid(*axes: float) -> DomainSpec:
    """``sum |z_j|^2 / a_j^2 < 1``."""
    n = len(axes)
    if n < 2 or any(a <= 0 for a in axes):
        raise ValidationError("ellipsoid needs >= 2 positive axes")
    terms = [Binary("mul", Num(1.0 / a**2), _abs2(j + 1)) for j, a in enumerate(axes)]
    root = Binary("sub", _sum(terms), Num(1.0))
    bbox = np.repeat([[-1.25 * a, 1.25 * a] for a in axes], 2, axis=0)
    return DomainSpec(n, Expr(root, n), {}, bbox, name="ellipsoid",
                      meta={"axes": list(axes)})


def complex_ellipsoid(m: int = 2, n: int = 2) -> DomainSpec:
    """``|z_1|^2 + sum_{j>=2} |z_j|^(2m) < 1``; weakly pseudoconvex on ``z_2 = .. = z_n = 0``."""
    if int(m) != m or m < 2:
        raise ValidationError("complex_ellipsoid exponent m must be an integer >= 2")
    terms = [_abs2(1)] + [Pow(_abs2(j), int(m)) for j in range(2, n + 1)]
    root = Binary("sub", _sum(terms), Num(1.0))
    return DomainSpec(n, Expr(root, n), {}, _box(n, 1.25), name="complex_ellipsoid",
                      meta={"m": int(m)})


def worm(beta: float) -> DomainSpec:
    """Smooth worm domain.

    ``rho = |z1 - exp(i s)|^2 - 1 + phi(s)`` with ``s = log|z2|^2`` and
    ``phi(s) = WORM_CAP * (ramp(-s)^4 + ramp(s - ell)^4)``, ``ell = 2 beta - pi``.
    ``phi`` is convex, C^3, vanishes exactly on ``[0, ell]`` and reaches 1 at
    distance 1 outside, so ``s`` ranges over ``[-1, ell + 1]``.  Weakly
    pseudoconvex points form the annulus ``z1 = 0, s in [0, ell]``.
    """
    if not beta > math.pi / 2:
        raise ValidationError(f"worm requires beta > pi/2, got {beta}")
    ell = 2 * beta - math.pi
    s = Unary("log", _abs2(2))
    x1, y1 = Unary("re", Var(1)), Unary("im", Var(1))
    twist = Binary("add", Binary("mul", x1, Unary("cos", s)), Binary("mul", y1, Unary("sin", s)))
    phi = Binary("mul", Num(WORM_CAP), Binary(
        "add",
        Pow(Unary("ramp", Unary("neg", s)), WORM_POWER),
        Pow(Unary("ramp", Binary("sub", s, Num(ell))), WORM_POWER)))
    root = Binary("add", Binary("sub", _abs2(1), Binary("mul", Num(2.0), twist)), phi)
    r2 = 1.05 * math.exp((ell + 1.0) / 2)
    bbox = np.array([[-2.1, 2.1], [-2.1, 2.1], [-r2, r2], [-r2, r2]])
    spec = DomainSpec(2, Expr(root, 2), {}, bbox, name="worm",
                      meta={"beta": float(beta), "weak_interval": [0.0, ell]})
    spec.psi_extras = worm_psi_extras(beta)
    return spec


def worm_psi_extras(beta: float) -> list[tuple[str, Expr]]:
    """Functions of ``s = log|z2|^2`` added to the psi basis for worms.

    Besides ``s`` and ``s^2`` these are ``log cos(k (s - ell/2))`` with
    ``k`` a fixed fraction of ``pi / ell``; they are smooth on a band
    containing the weak annulus, which is the only place the boundary
    criterion evaluates psi.
    """
    ell = 2 * beta - math.pi
    s = Unary("log", _abs2(2))
    out = [("s", Expr(s, 2)), ("s^2", Expr(Pow(s, 2), 2))]
    for frac in WORM_PROFILE_FRACTIONS:
        k = frac * math.pi / ell
        arg = Binary("mul", Num(k), Binary("sub", s, Num(ell / 2)))
        out.append((f"logcos[{frac}]", Expr(Unary("log", Unary("cos", arg)), 2)))
    return out


BUILTINS = {
    "ball": lambda p: ball(int(p.get("n", 2))),
    "ellipsoid": lambda p: ellipsoid(*[p[k] for k in sorted(p, key=_axis_key) if k.startswith("a")]),
    "complex_ellipsoid": lambda p: complex_ellipsoid(_int_param(p.get("m", 2), "m"),
                                                     int(p.get("n", 2))),
    "worm": lambda p: worm(_required(p, "beta")),
}


def _axis_key(k: str):
    digits = k[1:]
    return int(digits) if digits.isdigit() else 0


def _int_param(v, name):
    if float(v) != int(float(v)):
        raise ValidationError(f"{name} must be an integer")
    return int(float(v))


def _required(p, key):
    if key not in p:
        raise ValidationError(f"missing parameter {key}")
    return float(p[key])


def builtin(name: str, **params) -> DomainSpec:
    """Builtin domain by name: ``ball``, ``ellipsoid`` (a1, a2, ...),
    ``complex_ellipsoid`` (m), ``worm`` (beta)."""
    if name not in BUILTINS:
        raise ValidationError(f"unknown builtin domain {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name](params)


def parse_builtin_arg(text: str) -> DomainSpec:
    """``worm:beta=2.0`` / ``ellipsoid:a1=1,a2=2`` / ``ball``."""
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValidationError(f"bad builtin parameter {item!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ValidationError(f"bad builtin parameter {item!r}") from None
    return builtin(name.strip(), **params)


# ------------------------------------------------------------- file I/O

_ASSIGN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$")
_PARAM = re.compile(r"^\s*param\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _string(val: str, lineno: int) -> str:
    if len(val) >= 2 and val[0] == val[-1] == '"':
        return val[1:-1]
    raise ParseError("expected a double-quoted expression", 0, lineno)


def _number(val: str, lineno: int) -> float:
    try:
        return float(val)
    except ValueError:
        raise ParseError(f"expected a number, got {val!r}", 0, lineno) from None


def _parse_expr_at(src: str, n: int, params, lineno: int) -> Expr:
    try:
        return parse(src, n, params)
    except ParseError as exc:
        raise ParseError(str(exc).rsplit(" (", 1)[0], exc.offset, lineno) from None


def _bbox(val: str, lineno: int) -> np.ndarray:
    body = val.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ParseError("bbox must be [lo..hi; lo..hi; ...]", 0, lineno)
    rows = []
    for part in body[1:-1].split(";"):
        lo, sep, hi = part.partition("..")
        if not sep:
            raise ParseError(f"bad bbox range {part.strip()!r}", 0, lineno)
        rows.append([_number(lo.strip(), lineno), _number(hi.strip(), lineno)])
    return np.array(rows)


def loads_domain(text: str, real_samples: int = 1000) -> DomainSpec:
    fields: dict[str, tuple[str, int]] = {}
    params: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line.strip():
            continue
        m = _PARAM.match(line)
        if m:
            params[m.group(1)] = _number(m.group(2), lineno)
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ParseError(f"cannot parse line {line.strip()!r}", 0, lineno)
        key = m.group(1)
        if key not in ("dim", "rho", "bbox", "builtin", "name"):
            raise ParseError(f"unknown key {key!r}", 0, lineno)
        fields[key] = (m.group(2), lineno)
    if "builtin" in fields:
        name = fields["builtin"][0].strip('"')
        return builtin(name, **params)
    for key in ("dim", "rho", "bbox"):
        if key not in fields:
            raise ValidationError(f"domain file is missing {key!r}")
    dim_s, dim_line = fields["dim"]
    n = _number(dim_s, dim_line)
    if n != int(n):
        raise ParseError("dim must be an integer", 0, dim_line)
    n = int(n)
    rho_s, rho_line = fields["rho"]
    rho = _parse_expr_at(_string(rho_s, rho_line), n, list(params), rho_line)
    bbox = _bbox(*fields["bbox"])
    if bbox.shape != (2 * n, 2):
        raise ValidationError(f"bbox has {bbox.shape[0]} ranges, dimension {n} needs {2 * n}")
    name = fields.get("name", ("custom", 0))[0].strip('"')
    spec = DomainSpec(n, rho, params, bbox, name=name)
    check_real(spec, real_samples)
    return spec


def load_domain(path) -> DomainSpec:
    return loads_domain(Path(path).read_text(encoding="utf-8"))


def dumps_domain(spec: DomainSpec) -> str:
    lines = [f"name = \"{spec.name}\"", f"dim = {spec.n}"]
    lines += [f"param {k} = {float(v)!r}" for k, v in spec.params.items()]
    lines.append(f"rho = \"{to_source(spec.rho.root)}\"")
    ranges = "; ".join(f"{float(lo)!r}..{float(hi)!r}" for lo, hi in spec.bbox)
    lines.append(f"bbox = [{ranges}]")
    return "\n".join(lines) + "\n"


@dataclass
class MapText:
    dim_in: int
    dim_out: int
    params: dict[str, float]
    components: list[Expr]
    inverse: "MapText | None" = None


def loads_map(text: str) -> MapText:
    lines = text.splitlines()
    pos = 0

    def block(depth: int, params: dict[str, float]):
        nonlocal pos
        fields: dict[str, tuple[str, int]] = {}
        inv = None
        while pos < len(lines):
            lineno = pos + 1
            line = _strip(lines[pos]).strip()
            pos += 1
            if not line:
                continue
            if line == "}":
                if depth == 0:
                    raise ParseError("unmatched '}'", 0, lineno)
                return fields, inv, params
            if re.match(r"^inverse\s*\{$", line):
                if depth > 0:
                    raise ParseError("nested inverse blocks are not allowed", 0, lineno)
                inv = block(depth + 1, dict(params)) + (lineno,)
                continue
            m = _PARAM.match(line)
            if m:
                params[m.group(1)] = _number(m.group(2), lineno)
                continue
            m = _ASSIGN.match(line)
            if not m:
                raise ParseError(f"cannot parse line {line!r}", 0, lineno)
            fields[m.group(1)] = (m.group(2), lineno)
        if depth > 0:
            raise ParseError("unterminated inverse block", 0, len(lines))
        return fields, inv, params

    def build(fields, params, dim_in=None, dim_out=None, lineno=0) -> MapText:
        if dim_in is None:
            for key in ("dim_in", "dim_out"):
                if key not in fields:
                    raise ValidationError(f"map file is missing {key!r}")
            dim_in = int(_number(*fields["dim_in"]))
            dim_out = int(_number(*fields["dim_out"]))
        comps = []
        for k in range(1, dim_out + 1):
            if f"f{k}" not in fields:
                raise ParseError(f"missing component f{k}", 0, lineno)
            src, ln = fields[f"f{k}"]
            comps.append(_parse_expr_at(_string(src, ln), dim_in, list(params), ln))
        extra = [k for k in fields if k not in ("dim_in", "dim_out")
                 and not re.fullmatch(r"f\d+", k)]
        if extra or any(int(k[1:]) > dim_out for k in fields if re.fullmatch(r"f\d+", k)):
            raise ValidationError(f"unexpected keys in map file: {extra or 'component index'}")
        return MapText(dim_in, dim_out, dict(params), comps)

    fields, inv, params = block(0, {})
    out = build(fields, params)
    if inv is not None:
        ifields, _, iparams, iline = inv
        out.inverse = build(ifields, iparams, out.dim_out, out.dim_in, iline)
    return out


def load_map_text(path) -> MapText:
    return loads_map(Path(path).read_text(encoding="utf-8"))
