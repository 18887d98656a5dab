"""Adaptive Dormand-Prince 5(4) propagation with dense output.

The stepper is written directly on plain float lists: state dimensions
here are tiny (2n, usually 2) and the expensive part is the right-hand
side, which performs a velocity inversion per call.  Error control is
mixed, component-wise: a step is accepted when

    |err_i| <= tol * (1 + max(|z_i|, |z_new_i|))   for every component.

Step-size selection uses a PI controller (safety 0.9, growth clamped to
[0.2, 5]).  Dense output uses the classical quartic interpolant of the
pair, which is what makes the fixed 400-point resampling of a trajectory
cheap and order-consistent.

Everything is deterministic: identical inputs give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .normalform import SystemRhs
from .problem import PsiInversionError, psi as _psi

# Butcher tableau, Dormand & Prince 1980
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# fifth-minus-fourth order error weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
# dense-output weights
_D1 = -12715105075.0 / 11282082432.0
_D3 = 87487479700.0 / 32700410799.0
_D4 = -10690763975.0 / 1880347072.0
_D5 = 701980252875.0 / 199316789632.0
_D6 = -1453857185.0 / 822651844.0
_D7 = 69997945.0 / 29380423.0

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
_PI_BETA = 0.04
_PI_ALPHA = 0.2 - 0.75 * _PI_BETA
UNDERFLOW_FRACTION = 1e-14
DENSE_SAMPLES = 400


class IntegrationError(Exception):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


class DomainExitError(IntegrationError):
    pass


class StepUnderflowError(IntegrationError):
    pass


class BlowupError(IntegrationError):
    pass


@dataclass
class Trajectory:
    """Densely resampled solution over [0, T] plus integrator statistics."""

    times: list[float]
    states: list[tuple[float, ...]]  # flat (x..., y...) samples
    velocities: list  # x' at the samples (float for n = 1)
    steps: int
    rejected: int
    n: int
    lam: float

    @property
    def xs(self) -> list[float]:
        if self.n != 1:
            raise ValueError("xs is the scalar accessor; use states for n > 1")
        return [s[0] for s in self.states]

    @property
    def ys(self) -> list[float]:
        if self.n != 1:
            raise ValueError("ys is the scalar accessor; use states for n > 1")
        return [s[1] for s in self.states]

    def endpoint(self) -> tuple[float, ...]:
        return self.states[-1]


class _Stepper:
    """One integration leg [t0, t1] (either direction) with FSAL and PI control."""

    def __init__(self, f, z0, t0, t1, tol, domain_check=None):
        self.f = f
        self.t = t0
        self.t1 = t1
        self.z = list(z0)
        self.dim = len(self.z)
        self.tol = tol
        self.domain_check = domain_check
        self.direction = 1.0 if t1 >= t0 else -1.0
        self.h = (t1 - t0) * 0.01
        self.hmin = abs(t1 - t0) * UNDERFLOW_FRACTION
        self.err_old = 1e-4
        self.steps = 0
        self.rejected = 0
        self.k1 = self._eval(t0, self.z, first=True)
        # per accepted step, for dense evaluation
        self.last = None  # (t_old, h, z_old, rcont1..5)

    def _eval(self, t, z, first=False):
        try:
            out = self.f(t, z)
        except PsiInversionError:
            if first:
                raise
            return None
        for val in out:
            if not math.isfinite(val):
                if first:
                    raise BlowupError("right-hand side non-finite at start", t)
                return None
        return out

    def done(self) -> bool:
        return (self.t - self.t1) * self.direction >= 0.0

    def advance(self):
        """Take one accepted step; raises on underflow/domain exit."""
        f, z, dim, tol = self.f, self.z, self.dim, self.tol
        stiff_fail = None
        while True:
            h = self.h
            if abs(h) < self.hmin:
                if stiff_fail == "nonfinite":
                    raise BlowupError("state blew up", self.t)
                raise StepUnderflowError("step size underflow", self.t)
            # do not step past the endpoint
            hit_end = (self.t + h - self.t1) * self.direction >= 0.0
            if hit_end:
                h = self.t1 - self.t
            t = self.t
            k1 = self.k1
            z2 = [z[i] + h * (_A21 * k1[i]) for i in range(dim)]
            k2 = self._eval(t + _C2 * h, z2)
            k3 = k4 = k5 = k6 = k7 = None
            if k2 is not None:
                z3 = [z[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in range(dim)]
                k3 = self._eval(t + _C3 * h, z3)
            if k3 is not None:
                z4 = [
                    z[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
                    for i in range(dim)
                ]
                k4 = self._eval(t + _C4 * h, z4)
            if k4 is not None:
                z5 = [
                    z[i]
                    + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
                    for i in range(dim)
                ]
                k5 = self._eval(t + _C5 * h, z5)
            if k5 is not None:
                z6 = [
                    z[i]
                    + h
                    * (
                        _A61 * k1[i]
                        + _A62 * k2[i]
                        + _A63 * k3[i]
                        + _A64 * k4[i]
                        + _A65 * k5[i]
                    )
                    for i in range(dim)
                ]
                k6 = self._eval(t + h, z6)
            if k6 is not None:
                z_new = [
                    z[i]
                    + h
                    * (
                        _B1 * k1[i]
                        + _B3 * k3[i]
                        + _B4 * k4[i]
                        + _B5 * k5[i]
                        + _B6 * k6[i]
                    )
                    for i in range(dim)
                ]
                k7 = self._eval(t + h, z_new)
            if k7 is None:
                # a stage or the FSAL evaluation went non-finite: shrink, retry
                self.h = h * MIN_FACTOR
                self.rejected += 1
                stiff_fail = "nonfinite"
                continue
            err = 0.0
            for i in range(dim):
                e = h * (
                    _E1 * k1[i]
                    + _E3 * k3[i]
                    + _E4 * k4[i]
                    + _E5 * k5[i]
                    + _E6 * k6[i]
                    + _E7 * k7[i]
                )
                scale = tol * (1.0 + max(abs(z[i]), abs(z_new[i])))
                q = abs(e) / scale
                if q > err:
                    err = q
            if err <= 1.0:
                break
            factor = max(MIN_FACTOR, min(0.9, SAFETY * err ** -0.2))
            self.h = h * factor
            self.rejected += 1
            stiff_fail = "error"
        # accepted
        self.steps += 1
        ydiff = [z_new[i] - z[i] for i in range(dim)]
        bspl = [h * k1[i] - ydiff[i] for i in range(dim)]
        rcont4 = [ydiff[i] - h * k7[i] - bspl[i] for i in range(dim)]
        rcont5 = [
            h
            * (
                _D1 * k1[i]
                + _D3 * k3[i]
                + _D4 * k4[i]
                + _D5 * k5[i]
                + _D6 * k6[i]
                + _D7 * k7[i]
            )
            for i in range(dim)
        ]
        self.last = (t, h, list(z), ydiff, bspl, rcont4, rcont5)
        t_new = t + h
        if self.domain_check is not None and not self.domain_check(z_new):
            raise DomainExitError("position left the domain", t_new)
        if err == 0.0:
            factor = MAX_FACTOR
        else:
            factor = SAFETY * err ** -_PI_ALPHA * self.err_old ** _PI_BETA
            factor = max(MIN_FACTOR, min(MAX_FACTOR, factor))
        self.err_old = max(err, 1e-4)
        self.t = self.t1 if hit_end else t_new
        self.z = z_new
        self.k1 = k7
        self.h = h * factor

    def dense(self, t: float) -> list[float]:
        """Interpolate within the last accepted step."""
        t0, h, z0, ydiff, bspl, rc4, rc5 = self.last
        theta = (t - t0) / h
        om = 1.0 - theta
        return [
            z0[i]
            + theta * (ydiff[i] + om * (bspl[i] + theta * (rc4[i] + om * rc5[i])))
            for i in range(self.dim)
        ]


def _domain_check(spec):
    dom = spec.domain
    if spec.n == 1:
        return lambda z: dom.contains(z[0])
    n = spec.n
    return lambda z: dom.contains(z[:n])


def _leg_times(spec, t0, t1):
    """Split [t0, t1] at declared forcing breakpoints (order preserved)."""
    if not spec.breakpoints:
        return [t0, t1]
    lo, hi = min(t0, t1), max(t0, t1)
    cuts = [b for b in sorted(spec.breakpoints) if lo < b < hi]
    if t1 < t0:
        cuts = cuts[::-1]
    return [t0] + cuts + [t1]


def propagate(sys: SystemRhs, z0, t0: float, t1: float, tol: float):
    """Endpoint-only propagation; returns (z1, steps, rejected)."""
    check = _domain_check(sys.spec)
    z = list(z0)
    steps = rejected = 0
    for a, b in _pairs(_leg_times(sys.spec, t0, t1)):
        stepper = _Stepper(sys.flat, z, a, b, tol, domain_check=check)
        while not stepper.done():
            stepper.advance()
        z = stepper.z
        steps += stepper.steps
        rejected += stepper.rejected
    return z, steps, rejected


def _pairs(seq):
    return zip(seq[:-1], seq[1:])


def integrate(sys: SystemRhs, s0, T: float, tol: float, n_dense: int = DENSE_SAMPLES) -> Trajectory:
    """Propagate over [0, T] and resample to ``n_dense`` equal intervals.

    ``s0`` may be a State or a flat sequence.  Velocities at the samples
    are recovered through the partial inverse, so the returned trajectory
    satisfies |phi(lam, x_i, x'_i + lam*k) - y_i| at inversion tolerance.
    """
    if not 1e-13 <= tol <= 1e-3:
        raise ValueError("tol must lie in [1e-13, 1e-3]")
    spec = sys.spec
    z0 = s0.to_flat(spec.n) if hasattr(s0, "to_flat") else list(s0)
    check = _domain_check(spec)
    if not check(z0):
        raise DomainExitError("initial position outside the domain", 0.0)
    times = [T * i / n_dense for i in range(n_dense + 1)]
    states: list[tuple[float, ...]] = [tuple(z0)]
    next_sample = 1
    steps = rejected = 0
    z = list(z0)
    for a, b in _pairs(_leg_times(spec, 0.0, T)):
        stepper = _Stepper(sys.flat, z, a, b, tol, domain_check=check)
        while not stepper.done():
            stepper.advance()
            while next_sample <= n_dense and times[next_sample] <= stepper.t:
                ts = times[next_sample]
                if ts == stepper.t:
                    states.append(tuple(stepper.z))
                else:
                    states.append(tuple(stepper.dense(ts)))
                next_sample += 1
        z = stepper.z
        steps += stepper.steps
        rejected += stepper.rejected
    while next_sample <= n_dense:  # guard against roundoff at the tail
        states.append(tuple(z))
        next_sample += 1
    velocities = _recover_velocities(spec, sys.lam, times, states)
    return Trajectory(times, states, velocities, steps, rejected, spec.n, sys.lam)


def _recover_velocities(spec, lam, times, states):
    out = []
    if spec.n == 1:
        k_fn = spec._fns["k"][0] if spec._fns["k"] is not None else None
        for t, s in zip(times, states):
            v = _psi(spec, lam, s[0], s[1])
            if k_fn is not None:
                v -= lam * k_fn(t, s[0])
            out.append(v)
        return out
    n = spec.n
    for t, s in zip(times, states):
        x, y = s[:n], s[n:]
        v = _psi(spec, lam, x, y)
        if spec.k is not None:
            kv = spec.eval_k(t, x)
            v = tuple(vi - lam * ki for vi, ki in zip(v, kv))
        out.append(v)
    return out
