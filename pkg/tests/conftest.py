"""Shared test helpers: a high-precision finite-difference oracle and the
elementary-field corpus it is run against."""

from __future__ import annotations

import mpmath as mp

from recipfm.exprlang import FieldExpr, evaluate_value, parse_field
from recipfm.geometry import sample_points


def _mp_pow(base, exponent):
    e = float(exponent)
    if e.is_integer():
        return mp.power(base, int(e))
    return mp.power(base, exponent)


MP_FUNCS = {"exp": mp.exp, "ln": mp.log, "pow": _mp_pow, "hyp2f1": mp.hyp2f1}


def fd_partial(fexpr: FieldExpr, coords, alpha, step: float = 1e-4) -> float:
    """Central finite difference of order |alpha|, nested per index, evaluated
    in 50-digit arithmetic so the stated step stays meaningful at third order."""
    with mp.workdps(50):
        h = mp.mpf(repr(step))

        def base(c):
            return evaluate_value(fexpr, c, funcs=MP_FUNCS)

        def derive(fn, i):
            def d(c):
                up = list(c)
                dn = list(c)
                up[i] = up[i] + h
                dn[i] = dn[i] - h
                return (fn(up) - fn(dn)) / (2 * h)

            return d

        fn = base
        for i, a in enumerate(alpha):
            for _ in range(a):
                fn = derive(fn, i)
        return float(fn([mp.mpf(repr(c)) for c in coords]))


# Elementary fields exercising every jet primitive; sampled with a wide
# coordinate gap so third derivatives stay O(10) and the absolute
# finite-difference comparison is meaningful.
ELEMENTARY_CORPUS = (
    "u1 + u2",
    "u1*u2 - 3*u2",
    "1/(u2-u1)",
    "exp(0.5*u1)/(u2-u1)",
    "pow(u2-u1, -2)",
    "ln(u1+3)",
    "(u1-u2)^3",
    "hyp2f1(0.5, 1.5, 2.5, (u2-u1)/5)",
)


def corpus_points(count: int = 20, seed: int = 2024):
    return sample_points(2, count, seed, min_gap=1.2)


def corpus_exprs():
    return [parse_field(src, 2) for src in ELEMENTARY_CORPUS]
