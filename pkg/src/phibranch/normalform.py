"""Right-hand sides of the first-order system equivalent to the implicit ODE.

With the auxiliary variable y = phi(lam, x, x' + lam*k(t, x)) the implicit
equation becomes a 2n-dimensional system in normal form:

    x' = psi(lam, x, y) - lam * k(t, x)
    y' = lam * f(t, x, x', lam)                       (lambda-perturbed)
    y' = g(x, x') + lam * f(t, x, x', lam)            (autonomous form)

The ``direct`` variant evaluates exactly this.  The ``hadamard-split``
variant reaches the same values through the decomposition
psi(lam,x,u) = phi0^{-1}(u) + lam*h(lam,x,u), isolating every
lam-dependent term; it costs one extra inversion per call and exists to
cross-check the decomposition identities, not for production integration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .problem import (
    FORM_AUTONOMOUS,
    ProblemSpec,
    _invert_scalar,
    psi as _psi,
)

Vector = Union[float, tuple]


@dataclass(frozen=True)
class State:
    """Point (x, y) of the equivalent system; y = phi(lam, x, x')."""

    x: Vector
    y: Vector

    def to_flat(self, n: int) -> list[float]:
        if n == 1:
            return [self.x, self.y]
        return list(self.x) + list(self.y)

    @staticmethod
    def from_flat(z, n: int) -> "State":
        if n == 1:
            return State(z[0], z[1])
        return State(tuple(z[:n]), tuple(z[n:]))


class SystemRhs:
    """Evaluatable right-hand side for one (problem, lam, variant) triple."""

    def __init__(self, spec: ProblemSpec, lam: float, variant: str = "direct"):
        if variant not in ("direct", "hadamard-split"):
            raise ValueError(f"unknown variant {variant!r}")
        if lam < 0.0:
            raise ValueError("lam must be nonnegative")
        self.spec = spec
        self.lam = lam
        self.variant = variant
        self.flat = _build_flat_rhs(spec, lam, variant)
        self._other = None

    def __call__(self, t: float, z: list[float]) -> list[float]:
        return self.flat(t, z)

    def flat_variant(self, variant: str):
        if variant == self.variant:
            return self.flat
        if self._other is None:
            self._other = _build_flat_rhs(self.spec, self.lam, variant)
        return self._other


def _scalar_inverter(spec: ProblemSpec) -> Callable[[float, float, float], float]:
    fns = spec._fns
    if fns["psi"] is not None:
        return fns["psi"][0]
    phi = fns["phi"][0]
    hint = fns["hint"]
    params = spec.inversion
    return lambda lam, x, u: _invert_scalar(
        lambda q: phi(lam, x, q), u, hint, params
    )


def _build_flat_rhs(spec: ProblemSpec, lam: float, variant: str):
    if spec.n == 1:
        return _build_scalar_rhs(spec, lam, variant)
    return _build_vector_rhs(spec, lam, variant)


def _build_scalar_rhs(spec: ProblemSpec, lam: float, variant: str):
    fns = spec._fns
    inv = _scalar_inverter(spec)
    f_fn = fns["f"][0]
    g_fn = fns["g"][0] if fns["g"] is not None else None
    k_fn = fns["k"][0] if fns["k"] is not None else None
    autonomous = spec.form == FORM_AUTONOMOUS

    if variant == "direct":

        def rhs(t: float, z) -> list[float]:
            x = z[0]
            v = inv(lam, x, z[1])
            if k_fn is not None:
                v -= lam * k_fn(t, x)
            if autonomous:
                dy = g_fn(x, v)
                if lam != 0.0:
                    dy += lam * f_fn(t, x, v, lam)
            else:
                dy = lam * f_fn(t, x, v, lam) if lam != 0.0 else 0.0
            return [v, dy]

        return rhs

    x_sample = spec.domain.sample_point()

    def rhs_split(t: float, z) -> list[float]:
        x, y = z[0], z[1]
        u0 = inv(0.0, x_sample, y)  # phi0^{-1}(y)
        if lam > 0.0:
            h = (inv(lam, x, y) - u0) / lam
        else:
            h = 0.0
        v = u0 + lam * h
        if k_fn is not None:
            v -= lam * k_fn(t, x)
        if autonomous:
            g0 = g_fn(x, u0)
            if lam > 0.0:
                # big-F term: lam-difference quotient of g plus the forcing
                big_f = (g_fn(x, v) - g0) / lam + f_fn(t, x, v, lam)
                dy = g0 + lam * big_f
            else:
                dy = g0
        else:
            dy = lam * f_fn(t, x, v, lam) if lam > 0.0 else 0.0
        return [v, dy]

    return rhs_split


def _build_vector_rhs(spec: ProblemSpec, lam: float, variant: str):
    n = spec.n
    autonomous = spec.form == FORM_AUTONOMOUS

    def rhs(t: float, z) -> list[float]:
        x = tuple(z[:n])
        y = tuple(z[n:])
        if variant == "direct":
            v = _psi(spec, lam, x, y)
        else:
            u0 = _psi(spec, 0.0, x, y)
            if lam > 0.0:
                full = _psi(spec, lam, x, y)
                v = tuple(u + lam * ((q - u) / lam) for u, q in zip(u0, full))
            else:
                v = u0
        if spec.k is not None:
            kv = spec.eval_k(t, x)
            v = tuple(vi - lam * ki for vi, ki in zip(v, kv))
        if autonomous:
            dy = spec.eval_g(x, v)
            if lam != 0.0:
                fv = spec.eval_f(t, x, v, lam)
                dy = tuple(a + lam * b for a, b in zip(dy, fv))
        elif lam != 0.0:
            dy = tuple(lam * b for b in spec.eval_f(t, x, v, lam))
        else:
            dy = (0.0,) * n
        return list(v) + list(dy)

    return rhs


def rhs(sys: SystemRhs, t: float, s: State) -> State:
    """Direct-variant derivative at (t, s), as a State-shaped pair."""
    out = sys.flat_variant("direct")(t, s.to_flat(sys.spec.n))
    return State.from_flat(out, sys.spec.n)


def rhs_split(sys: SystemRhs, t: float, s: State) -> State:
    """Hadamard-split derivative; agrees with :func:`rhs` up to inversion error."""
    out = sys.flat_variant("hadamard-split")(t, s.to_flat(sys.spec.n))
    return State.from_flat(out, sys.spec.n)
