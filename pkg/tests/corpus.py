"""Seeded expression corpora shared by the jet tests and the acceptance run."""

from __future__ import annotations

import numpy as np

from crindex.expr import parse

N = 2
_LEAVES = ("z1", "z2", "conj(z1)", "conj(z2)", "re(z1)", "im(z2)", "I", "0.5", "1.25")


def _gen(rng, depth: int) -> str:
    if depth == 0 or rng.random() < 0.2:
        return _LEAVES[rng.integers(len(_LEAVES))]
    kind = rng.integers(10)
    a = _gen(rng, depth - 1)
    if kind < 2:
        return f"({a} + {_gen(rng, depth - 1)})"
    if kind == 2:
        return f"({a} - {_gen(rng, depth - 1)})"
    if kind == 3:
        return f"({a} * {_gen(rng, depth - 1)})"
    if kind == 4:
        return f"pow({a}, {rng.integers(2, 4)})"
    if kind == 5:
        return f"exp(0.3 * {a})"
    if kind == 6:
        return f"{('sin', 'cos')[rng.integers(2)]}({a})"
    if kind == 7:
        return f"({a} / (2 + abs2({_gen(rng, depth - 1)})))"
    if kind == 8:
        return f"log(1 + abs2({a}))"
    return f"{('conj', 're', 'im', 'abs2')[rng.integers(4)]}({a})"


def random_corpus(count: int = 500, seed: int = 0, depth: int = 4):
    """``count`` (expression, point) pairs with points in the polydisc of radius 0.7."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        e = parse(_gen(rng, depth), N)
        r = 0.7 * np.sqrt(rng.random(N))
        z = r * np.exp(2j * np.pi * rng.random(N))
        out.append((e, z))
    return out


def dyadic_corpus(count: int = 100, seed: int = 0):
    """Real quadratics with dyadic coefficients at dyadic points.

    Central differences with a dyadic step are exact on these, so the jet and
    the stencils must agree bit for bit.
    """
    rng = np.random.default_rng(seed)
    atoms = ("re(z1)", "im(z1)", "re(z2)", "im(z2)")
    out = []
    for _ in range(count):
        terms = [f"{rng.integers(-8, 9) / 4}"]
        for a in atoms:
            terms.append(f"{rng.integers(-8, 9) / 4} * {a}")
        for i in range(4):
            for j in range(i, 4):
                if rng.random() < 0.5:
                    terms.append(f"{rng.integers(-8, 9) / 8} * {atoms[i]} * {atoms[j]}")
        if rng.random() < 0.5:
            terms.append(f"{rng.integers(1, 5) / 2} * abs2(z1)")
        e = parse(" + ".join(terms), N)
        z = rng.integers(-16, 17, N) / 16 + 1j * rng.integers(-16, 17, N) / 16
        out.append((e, z))
    return out
