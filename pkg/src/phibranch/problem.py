"""Problem data and the hypothesis vector fields.

A :class:`ProblemSpec` bundles everything that defines one parametric
implicit ODE

    [phi(lam, x, x')]' = lam * f(t, x, x', lam)                (lambda-perturbed)
    [phi(lam, x, x')]' = g(x, x') + lam * f(t, x, x', lam)     (autonomous + perturbation)

together with the period, the state dimension and the open domain of the
position variable.  The velocity slot of phi is inverted numerically
(dimension one) or through a user-supplied inverse formula, giving the
partial inverse psi with phi(lam, x, psi(lam, x, u)) = u.

The two bifurcation hypothesis fields live here as well: the average wind
w(p) = (1/T) * integral of f(t, p, 0, 0) over one period, and
gamma(p) = g(p, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import exprs
from .exprs import Expr

_SQRT_EPS = math.sqrt(2.220446049250313e-16)
_INF = float("inf")

PSI_TOL = 1e-10  # |phi(lam,x,psi) - u| <= PSI_TOL * (1 + |u|)
MAX_BRACKET_DOUBLINGS = 60
WIND_REL_TOL = 1e-10
WIND_ABS_FLOOR = 1e-13

FORM_LAMBDA = "lambda-perturbed"
FORM_AUTONOMOUS = "autonomous-plus-perturbation"


class ProblemError(Exception):
    """Base class for problem-definition and inversion failures."""


class ConfigError(ProblemError):
    pass


class FormError(ProblemError):
    pass


class PsiInversionError(ProblemError):
    pass


class NonMonotoneError(PsiInversionError):
    pass


class QuadratureError(ProblemError):
    pass


# --- domains ----------------------------------------------------------------


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of open intervals with explicitly excluded points (n=1)."""

    intervals: tuple[tuple[float, float], ...] = ((-_INF, _INF),)
    excluded: tuple[float, ...] = ()

    def __post_init__(self):
        for a, b in self.intervals:
            if not a < b:
                raise ConfigError(f"empty interval ({a}, {b})")

    def contains(self, x: float) -> bool:
        if any(x == e for e in self.excluded):
            return False
        return any(a < x < b for a, b in self.intervals)

    def components(self) -> list[tuple[float, float]]:
        """Maximal open intervals after splitting at the excluded points."""
        out = []
        for a, b in self.intervals:
            cuts = sorted(e for e in self.excluded if a < e < b)
            lo = a
            for c in cuts:
                out.append((lo, c))
                lo = c
            out.append((lo, b))
        return out

    def sample_point(self) -> float:
        a, b = self.intervals[0]
        if math.isinf(a) and math.isinf(b):
            x = 0.0
        elif math.isinf(a):
            x = b - 1.0
        elif math.isinf(b):
            x = a + 1.0
        else:
            x = 0.5 * (a + b)
        step = 0.1 if math.isinf(b) else 0.099 * (b - a)
        while not self.contains(x):
            x += step
        return x


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box, the position domain for n > 1."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, x: Sequence[float]) -> bool:
        return all(a < xi < b for a, xi, b in zip(self.lo, x, self.hi))

    def sample_point(self) -> tuple[float, ...]:
        return tuple(
            0.0
            if math.isinf(a) and math.isinf(b)
            else (a + 1.0 if math.isinf(b) else (b - 1.0 if math.isinf(a) else 0.5 * (a + b)))
            for a, b in zip(self.lo, self.hi)
        )


# --- core types ---------------------------------------------------------------


def position_names(n: int) -> tuple[str, ...]:
    return ("x",) if n == 1 else tuple(f"x{i}" for i in range(1, n + 1))


def velocity_names(n: int) -> tuple[str, ...]:
    return ("v",) if n == 1 else tuple(f"v{i}" for i in range(1, n + 1))


def value_names(n: int) -> tuple[str, ...]:
    return ("u",) if n == 1 else tuple(f"u{i}" for i in range(1, n + 1))


@dataclass(frozen=True)
class PhiMap:
    """The left-hand-side map phi and, optionally, its analytic inverse."""

    phi: tuple[Expr, ...]
    psi: tuple[Expr, ...] | None = None
    monotone_hint: int = 0  # sign of d phi / d v; 0 = detect at build time


@dataclass(frozen=True)
class PartialInverse:
    """Bracketing/Newton parameters for the numeric velocity inversion."""

    tol_scale: float = PSI_TOL
    bracket_growth: float = 2.0
    max_doublings: int = MAX_BRACKET_DOUBLINGS


@dataclass(frozen=True)
class StartingPoint:
    """Initial data (lam, p, v) of a candidate T-periodic solution."""

    lam: float
    p: float
    v: float


@dataclass(frozen=True)
class ProblemSpec:
    form: str
    phi: PhiMap
    f: tuple[Expr, ...]
    g: tuple[Expr, ...] | None
    period: float
    n: int = 1
    domain: IntervalUnion | Box = IntervalUnion()
    k: tuple[Expr, ...] | None = None
    breakpoints: tuple[float, ...] = ()
    inversion: PartialInverse = PartialInverse()
    _fns: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.form not in (FORM_LAMBDA, FORM_AUTONOMOUS):
            raise ConfigError(f"unknown form {self.form!r}")
        if self.form == FORM_AUTONOMOUS and self.g is None:
            raise ConfigError("autonomous-plus-perturbation form requires g")
        if self.form == FORM_LAMBDA and self.g is not None:
            raise ConfigError("lambda-perturbed form must not define g")
        if not self.period > 0.0:
            raise ConfigError("period must be positive")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        n = self.n
        xs, vs, us = position_names(n), velocity_names(n), value_names(n)
        self._check_vars("phi", self.phi.phi, ("lam",) + xs + vs, n)
        if self.phi.psi is not None:
            self._check_vars("psi", self.phi.psi, ("lam",) + xs + us, n)
        self._check_vars("f", self.f, ("t",) + xs + vs + ("lam",), n)
        if self.g is not None:
            self._check_vars("g", self.g, xs + vs, n)
        if self.k is not None:
            self._check_vars("k", self.k, ("t",) + xs, n)
        self._compile()
        if n == 1:
            self._fns["hint"] = (
                self.phi.monotone_hint
                if self.phi.monotone_hint != 0
                else self._detect_monotone_sign()
            )

    @staticmethod
    def _check_vars(label, comps, allowed, n):
        if len(comps) != n:
            raise ConfigError(f"{label} must have {n} component(s), got {len(comps)}")
        for comp in comps:
            extra = exprs.free_vars(comp) - set(allowed)
            if extra:
                raise ConfigError(
                    f"{label} uses unknown variable(s) {sorted(extra)}; "
                    f"allowed: {list(allowed)}"
                )

    def _compile(self):
        n = self.n
        xs, vs, us = position_names(n), velocity_names(n), value_names(n)
        fns = self._fns
        fns["phi"] = tuple(
            exprs.compile_expr(c, ("lam",) + xs + vs) for c in self.phi.phi
        )
        fns["psi"] = (
            tuple(exprs.compile_expr(c, ("lam",) + xs + us) for c in self.phi.psi)
            if self.phi.psi is not None
            else None
        )
        fns["f"] = tuple(
            exprs.compile_expr(c, ("t",) + xs + vs + ("lam",)) for c in self.f
        )
        fns["g"] = (
            tuple(exprs.compile_expr(c, xs + vs) for c in self.g)
            if self.g is not None
            else None
        )
        fns["k"] = (
            tuple(exprs.compile_expr(c, ("t",) + xs) for c in self.k)
            if self.k is not None
            else None
        )

    def _detect_monotone_sign(self) -> int:
        x0 = self.domain.sample_point()
        phi = self._fns["phi"][0]
        d = phi(0.0, x0, 1.0) - phi(0.0, x0, -1.0)
        if not math.isfinite(d) or d == 0.0:
            raise ConfigError(
                "could not detect the monotonicity of phi in v; "
                "set monotone_hint explicitly"
            )
        return 1 if d > 0 else -1

    # vector evaluation helpers (scalar fast path for n == 1)

    def eval_phi(self, lam: float, x, v):
        if self.n == 1:
            return self._fns["phi"][0](lam, x, v)
        return tuple(fn(lam, *x, *v) for fn in self._fns["phi"])

    def eval_f(self, t: float, x, v, lam: float):
        if self.n == 1:
            return self._fns["f"][0](t, x, v, lam)
        return tuple(fn(t, *x, *v, lam) for fn in self._fns["f"])

    def eval_g(self, x, v):
        if self.g is None:
            raise FormError("g is not defined for the lambda-perturbed form")
        if self.n == 1:
            return self._fns["g"][0](x, v)
        return tuple(fn(*x, *v) for fn in self._fns["g"])

    def eval_k(self, t: float, x):
        if self.k is None:
            return 0.0 if self.n == 1 else (0.0,) * self.n
        if self.n == 1:
            return self._fns["k"][0](t, x)
        return tuple(fn(t, *x) for fn in self._fns["k"])


# --- partial inverse ----------------------------------------------------------


def _invert_scalar(
    phi: Callable[[float, float, float], float],
    lam: float,
    x: float,
    u: float,
    hint: int,
    params: PartialInverse,
) -> float:
    """Solve phi(lam, x, q) = u for strictly monotone phi(lam, x, .).

    Doubles a symmetric bracket until the residual changes sign, then
    polishes with Newton steps whose derivative is the finite-difference
    slope through the two most recent iterates, falling back to bisection
    whenever a step would leave the bracket.
    """
    ftol = params.tol_scale * (1.0 + abs(u))
    half = 1.0 + abs(u)
    lo, hi = -half, half
    flo = phi(lam, x, lo) - u
    fhi = phi(lam, x, hi) - u
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise PsiInversionError("phi evaluated non-finite while bracketing")
    if hint * (fhi - flo) < 0.0:
        raise NonMonotoneError(
            f"phi sample not monotone with hint {hint:+d} on [{lo}, {hi}]"
        )
    doublings = 0
    while flo * fhi > 0.0:
        if doublings >= params.max_doublings:
            raise PsiInversionError(
                f"no sign change after {params.max_doublings} bracket doublings; "
                "phi does not appear to be onto"
            )
        half *= params.bracket_growth
        lo, hi = -half, half
        flo = phi(lam, x, lo) - u
        fhi = phi(lam, x, hi) - u
        if not (math.isfinite(flo) and math.isfinite(fhi)):
            raise PsiInversionError("phi evaluated non-finite while bracketing")
        doublings += 1
    # orient the bracket so fa <= 0 <= fb
    if flo <= 0.0 <= fhi:
        a, fa, b, fb = lo, flo, hi, fhi
    else:
        a, fa, b, fb = hi, fhi, lo, flo
    if abs(fa) <= ftol:
        return a
    if abs(fb) <= ftol:
        return b
    q_prev, f_prev = a, fa
    q, fq = b, fb
    for _ in range(200):
        denom = fq - f_prev
        if denom != 0.0 and math.isfinite(denom):
            cand = q - fq * (q - q_prev) / denom
        else:
            cand = 0.5 * (a + b)
        inside = (a < cand < b) if a < b else (b < cand < a)
        if not inside or not math.isfinite(cand):
            cand = 0.5 * (a + b)
        f_cand = phi(lam, x, cand) - u
        if abs(f_cand) <= ftol:
            return cand
        if f_cand < 0.0:
            a, fa = cand, f_cand
        else:
            b, fb = cand, f_cand
        q_prev, f_prev = q, fq
        q, fq = cand, f_cand
        if a == b or abs(b - a) <= 1e-16 * (1.0 + abs(a)):
            return 0.5 * (a + b)
    raise PsiInversionError("velocity inversion did not converge")


def psi(spec: ProblemSpec, lam: float, x, u):
    """Partial inverse: the velocity q with phi(lam, x, q) = u."""
    fns = spec._fns
    if fns["psi"] is not None:
        if spec.n == 1:
            return fns["psi"][0](lam, x, u)
        return tuple(fn(lam, *x, *u) for fn in fns["psi"])
    if spec.n != 1:
        raise PsiInversionError(
            "numeric inversion is implemented for n = 1 only; supply psi formulas"
        )
    return _invert_scalar(
        fns["phi"][0], lam, x, u, fns["hint"], spec.inversion
    )


def phi0_inverse(spec: ProblemSpec, u):
    """Inverse of phi0 = phi(0, ., .); the position argument is irrelevant."""
    return psi(spec, 0.0, spec.domain.sample_point(), u)


def hadamard_h(spec: ProblemSpec, lam: float, x, u):
    """The decomposition term h with psi(lam,x,u) = phi0^{-1}(u) + lam * h(lam,x,u).

    Numerically exact by construction; intended for diagnostics and for the
    split right-hand-side variant, not for the continuation hot path.
    """
    if not lam > 0.0:
        raise ValueError("hadamard_h requires lam > 0")
    full = psi(spec, lam, x, u)
    base = phi0_inverse(spec, u)
    if spec.n == 1:
        return (full - base) / lam
    return tuple((a - b) / lam for a, b in zip(full, base))


# --- quadrature and the hypothesis fields -------------------------------------


def _adaptive_simpson(fn, a: float, b: float, tol: float, depth: int = 48) -> float:
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    for val, t in ((fa, a), (fm, m), (fb, b)):
        if not math.isfinite(val):
            raise QuadratureError(f"integrand non-finite at t = {t}")
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(fn, a, m, b, fa, fm, fb, whole, tol, depth)


def _simpson_rec(fn, a, m, b, fa, fm, fb, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = fn(lm)
    frm = fn(rm)
    if not (math.isfinite(flm) and math.isfinite(frm)):
        raise QuadratureError("integrand non-finite during refinement")
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    half = 0.5 * tol
    return _simpson_rec(
        fn, a, lm, m, fa, flm, fm, left, half, depth - 1
    ) + _simpson_rec(fn, m, rm, b, fm, frm, fb, right, half, depth - 1)


def _integrate_periodic(spec: ProblemSpec, fn) -> float:
    """Integrate fn over [0, T], splitting at declared forcing breakpoints."""
    edges = [0.0] + [t for t in sorted(spec.breakpoints) if 0.0 < t < spec.period]
    edges.append(spec.period)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        coarse = abs((b - a) * fn(0.5 * (a + b)))
        tol = max(WIND_ABS_FLOOR, WIND_REL_TOL * max(1.0, coarse))
        total += _adaptive_simpson(fn, a, b, tol)
    return total


def average_wind(spec: ProblemSpec, p):
    """Time average of the forcing at rest: (1/T) * integral of f(t, p, 0, 0)."""
    T = spec.period
    if spec.n == 1:
        return _integrate_periodic(spec, lambda t: spec.eval_f(t, p, 0.0, 0.0)) / T
    zero = (0.0,) * spec.n
    return tuple(
        _integrate_periodic(spec, lambda t, i=i: spec.eval_f(t, p, zero, 0.0)[i]) / T
        for i in range(spec.n)
    )


def gamma(spec: ProblemSpec, p):
    """The autonomous hypothesis field g(p, 0)."""
    if spec.form != FORM_AUTONOMOUS:
        raise FormError("gamma is defined only for the autonomous-plus-perturbation form")
    if spec.n == 1:
        return spec.eval_g(p, 0.0)
    return spec.eval_g(p, (0.0,) * spec.n)


def hypothesis_field(spec: ProblemSpec) -> Callable:
    """The field whose zeros seed branches: gamma, or the average wind."""
    if spec.form == FORM_AUTONOMOUS:
        return lambda p: gamma(spec, p)
    return lambda p: average_wind(spec, p)


# --- configuration loading ------------------------------------------------------


def _parse_components(value, label: str) -> tuple[Expr, ...]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{label} must be a formula string or a list of them")
    try:
        return tuple(exprs.parse(s) for s in value)
    except exprs.ExprError as err:
        raise ConfigError(f"cannot parse {label}: {err}") from err


def _parse_endpoint(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf"):
            return _INF
        if s == "-inf":
            return -_INF
        raise ConfigError(f"bad interval endpoint {v!r}")
    return float(v)


def _parse_domain(cfg: dict, n: int):
    raw = cfg.get("domain")
    excluded = tuple(float(e) for e in cfg.get("excluded", []))
    if raw is None:
        if n == 1:
            return IntervalUnion(((-_INF, _INF),), excluded)
        return Box((-_INF,) * n, (_INF,) * n)
    if n == 1:
        ivs = tuple((_parse_endpoint(a), _parse_endpoint(b)) for a, b in raw)
        return IntervalUnion(ivs, excluded)
    lo = tuple(_parse_endpoint(a) for a, _ in raw)
    hi = tuple(_parse_endpoint(b) for _, b in raw)
    return Box(lo, hi)


def problem_from_dict(cfg: dict) -> ProblemSpec:
    try:
        form = cfg["form"]
        phi_exprs = _parse_components(cfg["phi"], "phi")
        f_exprs = _parse_components(cfg["f"], "f")
        period = float(cfg["period"])
    except KeyError as err:
        raise ConfigError(f"missing required key {err.args[0]!r}") from err
    n = int(cfg.get("n", 1))
    psi_exprs = _parse_components(cfg["psi"], "psi") if "psi" in cfg else None
    g_exprs = _parse_components(cfg["g"], "g") if "g" in cfg else None
    k_exprs = _parse_components(cfg["k"], "k") if "k" in cfg else None
    phimap = PhiMap(phi_exprs, psi_exprs, int(cfg.get("monotone_hint", 0)))
    return ProblemSpec(
        form=form,
        phi=phimap,
        f=f_exprs,
        g=g_exprs,
        period=period,
        n=n,
        domain=_parse_domain(cfg, n),
        k=k_exprs,
        breakpoints=tuple(float(t) for t in cfg.get("breakpoints", [])),
    )


def load_problem(path) -> ProblemSpec:
    """Load a problem from a TOML file (see README for the key schema)."""
    try:
        with open(Path(path), "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"bad TOML in {path}: {err}") from err
    return problem_from_dict(cfg)
