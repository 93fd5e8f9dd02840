"""Seeded random nonlinear models for property testing.

Three families, all built around a damped linear core so that short
simulations from small initial states stay bounded:

* :func:`poly_trig_model` draws terms whose line integrands stay inside
  the symbolic rule table (polynomial, bilinear, sin/cos of a scaled
  component), so analytic factorization never falls back to quadrature.
* :func:`mixed_model` adds tanh, exp and trig-times-state terms whose
  integrands have no closed form in the table, exercising the deferred
  quadrature path.
* :func:`rational_model` adds terms with state-dependent (but safely
  bounded) denominators.

Generation is fully determined by the seed; the same seed always yields
the same model, including across processes.
"""

from __future__ import annotations

import random

from .expr import Const, Expr, Var, add, call, div, mul, pow_
from .factorize import NlssModel, input_names, state_names


def _coeff(rng: random.Random, lo: float = 0.1, hi: float = 0.6) -> float:
    c = round(rng.uniform(lo, hi), 3)
    return c if rng.random() < 0.5 else -c


def _freq(rng: random.Random) -> float:
    return rng.choice((0.5, 1.0, 1.5, 2.0))


def _dims(rng: random.Random) -> tuple[int, int, int]:
    return rng.randint(1, 4), rng.randint(1, 4), rng.randint(1, 2)


def _damped_base(rng, i, xs, us) -> list[Expr]:
    # every state equation starts from -(1..2) x_i + small input coupling
    return [
        mul(Const(-(1.0 + round(rng.uniform(0.0, 1.0), 3))), Var(xs[i])),
        mul(Const(_coeff(rng)), Var(rng.choice(us))),
    ]


def _outputs(rng, ny, xs, us, extra_kinds) -> tuple[Expr, ...]:
    hs = []
    for _ in range(ny):
        parts = [mul(Const(_coeff(rng)), Var(rng.choice(xs)))]
        if rng.random() < 0.4:
            parts.append(mul(Const(_coeff(rng)), Var(rng.choice(us))))
        if extra_kinds and rng.random() < 0.6:
            parts.append(extra_kinds(rng.choice(xs)))
        hs.append(add(*parts))
    return tuple(hs)


def poly_trig_model(seed: int) -> NlssModel:
    rng = random.Random(1000 + seed)
    nx, nu, ny = _dims(rng)
    xs, us = state_names(nx), input_names(nu)
    both = xs + us

    def term(i: int) -> Expr:
        kind = rng.choice(("lin", "bilin", "cubic", "trig"))
        c = Const(_coeff(rng))
        if kind == "lin":
            return mul(c, Var(rng.choice(both)))
        if kind == "bilin":
            return mul(c, Var(rng.choice(both)), Var(rng.choice(both)))
        if kind == "cubic":
            return mul(Const(-abs(_coeff(rng, 0.05, 0.3))), pow_(Var(xs[i]), 3))
        return mul(c, call(rng.choice(("sin", "cos")),
                           mul(Const(_freq(rng)), Var(rng.choice(both)))))

    f = tuple(
        add(*_damped_base(rng, i, xs, us),
            *(term(i) for _ in range(rng.randint(1, 2))))
        for i in range(nx)
    )
    h = _outputs(rng, ny, xs, us,
                 lambda v: mul(Const(_coeff(rng)),
                               call("sin", mul(Const(_freq(rng)), Var(v)))))
    return NlssModel(nx, nu, ny, f, h, name=f"synthetic_poly_trig_{seed}")


def mixed_model(seed: int) -> NlssModel:
    rng = random.Random(2000 + seed)
    nx, nu, ny = _dims(rng)
    xs, us = state_names(nx), input_names(nu)
    both = xs + us

    def term(i: int) -> Expr:
        kind = rng.choice(("lin", "trig", "tanh", "exp", "crossmul"))
        c = Const(_coeff(rng))
        if kind == "lin":
            return mul(c, Var(rng.choice(both)))
        if kind == "trig":
            return mul(c, call("sin", mul(Const(_freq(rng)), Var(rng.choice(both)))))
        if kind == "tanh":
            return mul(c, call("tanh", mul(Const(_freq(rng)), Var(rng.choice(both)))))
        if kind == "exp":
            return mul(c, call("exp", mul(Const(rng.choice((-0.4, -0.2, 0.2, 0.4))),
                                          Var(rng.choice(both)))))
        # sin(v) * w: the integrand picks up lam * cos(lam a v) * w, which
        # the rule table declines, forcing the per-entry quadrature fallback
        return mul(c, call("sin", Var(rng.choice(both))), Var(rng.choice(both)))

    f = tuple(
        add(*_damped_base(rng, i, xs, us),
            *(term(i) for _ in range(rng.randint(1, 2))))
        for i in range(nx)
    )
    h = _outputs(rng, ny, xs, us,
                 lambda v: mul(Const(_coeff(rng)),
                               call("tanh", mul(Const(_freq(rng)), Var(v)))))
    return NlssModel(nx, nu, ny, f, h, name=f"synthetic_mixed_{seed}")


def rational_model(seed: int) -> NlssModel:
    rng = random.Random(3000 + seed)
    nx, nu, ny = _dims(rng)
    xs, us = state_names(nx), input_names(nu)
    both = xs + us

    def term(i: int) -> Expr:
        kind = rng.choice(("lin", "bilin", "rat", "rat"))
        c = Const(_coeff(rng))
        if kind == "lin":
            return mul(c, Var(rng.choice(both)))
        if kind == "bilin":
            return mul(c, Var(rng.choice(both)), Var(rng.choice(both)))
        # v / (2 + w^2) stays smooth on any real line segment
        return div(mul(c, Var(rng.choice(both))),
                   add(Const(2.0), pow_(Var(rng.choice(both)), 2)))

    f = tuple(
        add(*_damped_base(rng, i, xs, us),
            *(term(i) for _ in range(rng.randint(1, 2))))
        for i in range(nx)
    )
    h = _outputs(rng, ny, xs, us, None)
    return NlssModel(nx, nu, ny, f, h, name=f"synthetic_rational_{seed}")


_FAMILIES = (poly_trig_model, mixed_model, rational_model)


def random_model(seed: int) -> NlssModel:
    """Deterministic model from one of the three families, chosen by seed."""
    return _FAMILIES[seed % 3](seed)


def corpus_models() -> list[NlssModel]:
    """The fixed synthetic members of the example corpus."""
    return [poly_trig_model(101), mixed_model(202), rational_model(303)]
