"""Frequency-resolved correlation observables of the driven emitter.

Every correlation is a ratio of normally ordered sensor moments taken in
the steady state of the composite (emitter + sensors) master equation:

    g_{n1..nN}(w1..wN) = < prod_mu xi_mu+^n_mu xi_mu^n_mu >
                         / prod_mu < xi_mu+^n_mu xi_mu^n_mu >

Distinct sensor modes commute, so normal ordering across sensors is
automatic; a degenerate group of n photons in one frequency window is
realized as a single sensor of bundle order n with truncation n + 1,
whose ladder moment <xi+^n xi^n> is exactly the normally ordered one.

The sensor coupling eps must drop out of every reported ratio.  That is
enforced, not assumed: each value is computed at eps and eps/2 and only
accepted when the two agree to 0.5% (shifting eps downward when they do
not).  The sector-scaled steady-state solver keeps even eps^8-sized
moments at full relative accuracy, so the protocol converges at the
perturbative default coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import __version__
from .errors import (ConvergenceError, OracleError, ParameterError,
                     PrecisionError, PropagationError)
from .model import (CompositeModel, SensorSpec, SystemParams, build_model,
                    default_epsilon)
from .steady import DensityMatrix, solve_steady_state, solve_steady_state_sectored
from .operators import vec

#: Accept an eps / (eps/2) pair when the relative change is below this.
EPS_REL_TOL = 5e-3
#: Downward eps shifts attempted before giving up.
EPS_MAX_SHIFTS = 4
#: Upward eps doublings when a moment underflows entirely.
EPS_MAX_GROWTH = 6
#: A normalizer below this is treated as physically zero (undefined g).
UNDEFINED_FLOOR = 1e-200
#: A required moment below this raises a precision error.
MOMENT_FLOOR = 1e-250


@dataclass(frozen=True)
class CorrelationRequest:
    """A partition of photons over sensors with frequencies and linewidths.

    ``partition[mu]`` photons are detected jointly at ``frequencies[mu]``
    through a filter of width ``linewidths[mu]``.
    """

    partition: tuple[int, ...]
    frequencies: tuple[float, ...]
    linewidths: tuple[float, ...]
    tau_grid: tuple[float, ...] | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if not (len(self.partition) == len(self.frequencies) == len(self.linewidths)):
            raise ParameterError("partition, frequencies and linewidths must have equal length")
        if any(n < 1 for n in self.partition):
            raise ParameterError(f"bundle orders must be >= 1, got {self.partition}")
        if self.tau_grid is not None and any(
                b <= a for a, b in zip(self.tau_grid, self.tau_grid[1:])):
            raise ParameterError("tau grid must be strictly increasing")

    def sensors(self, truncation_bump: int = 0) -> tuple[SensorSpec, ...]:
        return tuple(
            SensorSpec(frequency=w, linewidth=g, bundle_order=n,
                       truncation=n + 1 + truncation_bump)
            for n, w, g in zip(self.partition, self.frequencies, self.linewidths)
        )


@dataclass
class ResultGrid:
    """Tagged numerical output on one or more axes.

    ``flags`` maps a flat grid index to a reason string for points that
    are undefined or failed; their values are NaN, never dropped.
    """

    axes: list  # [(name, ndarray), ...]
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def axis(self, name: str) -> np.ndarray:
        for n, a in self.axes:
            if n == name:
                return a
        raise KeyError(name)


@dataclass
class GResult:
    """A single converged correlation value with its protocol verdict."""

    value: float
    epsilon: float
    epsilon_pair: tuple[float, float]
    rel_change: float
    converged: bool

    def __float__(self):
        return self.value


def _dag(a):
    return a.conj().T


def _ladder_moment(x, n: int, rho: np.ndarray) -> complex:
    """Tr[xi+^n xi^n rho] for a lifted lowering operator."""
    op = x
    for _ in range(n - 1):
        op = op @ x
    if sp.issparse(op):
        m = (_dag(op) @ op) @ rho
        return complex(np.trace(m if isinstance(m, np.ndarray) else m.toarray()))
    return complex(np.trace(_dag(op) @ op @ rho))


def sensor_moments(model: CompositeModel, rho: DensityMatrix,
                   moment_floor: float = MOMENT_FLOOR):
    """Joint normally ordered moment and per-sensor normalizers.

    Returns ``(joint, normalizers)`` as real numbers; a joint moment with
    an imaginary part above 1e-10 of its magnitude is rejected.
    """
    m = rho.matrix
    joint_op = None
    normalizers = []
    for spec, x in zip(model.sensors, model.xi):
        n = spec.bundle_order
        xn = x
        for _ in range(n - 1):
            xn = xn @ x
        mom = _dag(xn) @ xn
        joint_op = mom if joint_op is None else joint_op @ mom
        normalizers.append(_ladder_moment(x, n, m))
    if joint_op is None:
        raise ParameterError("model has no sensors")
    prod = joint_op @ m
    joint = complex(np.trace(prod if isinstance(prod, np.ndarray) else prod.toarray()))

    def _realize(z, what):
        mag = abs(z)
        if mag > UNDEFINED_FLOOR and abs(z.imag) > 1e-10 * mag:
            raise PrecisionError(f"{what} has imaginary part {z.imag:.3e} of magnitude {mag:.3e}")
        return z.real

    joint_r = _realize(joint, "joint moment")
    norms_r = [_realize(z, "normalizer") for z in normalizers]
    for v in [joint_r] + norms_r:
        if 0.0 < abs(v) < moment_floor:
            raise PrecisionError(
                f"moment {v:.3e} below noise floor {moment_floor:.1e}; increase the coupling"
            )
    return joint_r, norms_r


def _g_at_epsilon(params: SystemParams, request: CorrelationRequest,
                  epsilon: float, truncation_bump: int = 0) -> float:
    """Raw correlation ratio at one finite sensor coupling."""
    model = build_model(params, request.sensors(truncation_bump), epsilon=epsilon)
    rho = solve_steady_state_sectored(model)
    joint, norms = sensor_moments(model, rho)
    den = math.prod(norms)
    if abs(den) < UNDEFINED_FLOOR ** len(norms) or any(abs(n) < UNDEFINED_FLOOR for n in norms):
        return math.nan
    return joint / den


def _converged_scalar(fn, eps0: float) -> GResult:
    """Run the coupling-convergence protocol on a scalar-valued fn(eps)."""
    eps = eps0
    value = None
    for _ in range(EPS_MAX_GROWTH + 1):
        try:
            value = fn(eps)
            break
        except PrecisionError:
            eps *= 2.0
    if value is None:
        raise PrecisionError(f"moments unresolvable up to coupling {eps:.3e}")
    last_pair = (value, value)
    for _ in range(EPS_MAX_SHIFTS):
        half = fn(eps / 2.0)
        if math.isnan(value) and math.isnan(half):
            return GResult(math.nan, eps / 2.0, (eps, eps / 2.0), math.nan, True)
        rel = abs(value - half) / max(abs(half), 1e-300)
        if rel < EPS_REL_TOL:
            return GResult(half, eps / 2.0, (eps, eps / 2.0), rel, True)
        last_pair = (value, half)
        value = half
        eps /= 2.0
    raise ConvergenceError(
        f"correlation did not stabilize under coupling halving (last pair at eps={eps:.3e})",
        value=last_pair[0], value_half=last_pair[1])


def g_zero_delay(params: SystemParams, request: CorrelationRequest,
                 epsilon: float | None = None,
                 truncation_bump: int = 0) -> GResult:
    """Zero-delay correlation of the requested photon partition."""
    if request.tau_grid is not None:
        raise ParameterError("zero-delay request must not carry a tau grid")
    eps0 = epsilon or request.epsilon or default_epsilon(
        params, request.sensors())
    return _converged_scalar(
        lambda e: _g_at_epsilon(params, request, e, truncation_bump), eps0)


# ---------------------------------------------------------------------------
# time-resolved correlations


def _propagate_expectations(L, x0: np.ndarray, weights: np.ndarray,
                            taus: np.ndarray) -> np.ndarray:
    """w . x(t) for x' = L x at the requested times (tau >= 0, ascending)."""
    if taus[-1] == 0.0:
        return np.array([np.dot(weights, x0).real] * len(taus))
    gen = L.generator
    mv = (lambda t, y: gen @ y)
    scale = float(np.max(np.abs(x0)))
    sol = solve_ivp(mv, (0.0, float(taus[-1])), x0, t_eval=taus,
                    method="DOP853", rtol=1e-9, atol=1e-13 * max(scale, 1.0))
    if not sol.success:
        raise PropagationError(f"integrator failed: {sol.message}")
    return np.real(weights @ sol.y)


def _g_tau_at_epsilon(params, group_a, group_b, taus, epsilon):
    model = build_model(params, (group_a, group_b), epsilon=epsilon)
    rho = solve_steady_state_sectored(model)
    L = model.liouvillian()
    xa, xb = model.xi
    na, nb = group_a.bundle_order, group_b.bundle_order

    def power(x, n):
        out = x
        for _ in range(n - 1):
            out = out @ x
        return out

    xan, xbn = power(xa, na), power(xb, nb)
    Ma = (_dag(xan) @ xan)
    Mb = (_dag(xbn) @ xbn)
    Ma = Ma.toarray() if sp.issparse(Ma) else Ma
    Mb = Mb.toarray() if sp.issparse(Mb) else Mb
    mean_a = float(np.trace(Ma @ rho.matrix).real)
    mean_b = float(np.trace(Mb @ rho.matrix).real)
    if min(abs(mean_a), abs(mean_b)) < UNDEFINED_FLOOR:
        return np.full(len(taus), math.nan)

    taus = np.asarray(taus, dtype=float)
    out = np.empty_like(taus)
    # trace weights: Tr[M X] = vec(M.T) . vec(X)
    wa = vec(np.ascontiguousarray(Ma.T))
    wb = vec(np.ascontiguousarray(Mb.T))

    def one_side(collapse_op, n, mean_first, w_second, ts):
        cn = power(collapse_op, n)
        X0 = cn @ rho.matrix @ _dag(cn)
        X0 = X0.toarray() if sp.issparse(X0) else X0
        X0 = X0 / mean_first          # Tr X0 = <M_first>
        return _propagate_expectations(L, vec(X0), w_second, ts) / (
            mean_b if w_second is wb else mean_a)

    pos = taus >= 0
    if pos.any():
        out[pos] = one_side(xa, na, mean_a, wb, taus[pos])
    if (~pos).any():
        ts = -taus[~pos][::-1]
        out[~pos] = one_side(xb, nb, mean_b, wa, ts)[::-1]
    return out


def g_tau(params: SystemParams, group_a: SensorSpec, group_b: SensorSpec,
          taus, epsilon: float | None = None) -> ResultGrid:
    """Two-time correlation between two filter groups.

    For tau >= 0 a bundle from group ``a`` is detected first; negative
    delays exchange the roles of the groups (standard two-time
    convention, which the raw definition leaves open).
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or len(taus) < 1 or np.any(np.diff(taus) <= 0):
        raise ParameterError("tau grid must be a strictly increasing 1-D array")
    eps0 = epsilon or default_epsilon(params, (group_a, group_b))

    eps = eps0
    curve = None
    for _ in range(EPS_MAX_GROWTH + 1):
        try:
            curve = _g_tau_at_epsilon(params, group_a, group_b, taus, eps)
            break
        except PrecisionError:
            eps *= 2.0
    if curve is None:
        raise PrecisionError("two-time moments unresolvable")
    rel = math.inf
    for _ in range(EPS_MAX_SHIFTS):
        half = _g_tau_at_epsilon(params, group_a, group_b, taus, eps / 2.0)
        rel = float(np.max(np.abs(curve - half)) / max(np.max(np.abs(half)), 1e-300))
        if rel < EPS_REL_TOL:
            curve = half
            eps /= 2.0
            break
        curve, eps = half, eps / 2.0
    else:
        raise ConvergenceError("two-time correlation did not stabilize under coupling halving",
                               value=float(np.max(np.abs(curve))),
                               value_half=float(np.max(np.abs(half))))
    meta = _meta(params, epsilon=eps, rel_change=rel,
                 groups=[(group_a.bundle_order, group_a.frequency, group_a.linewidth),
                         (group_b.bundle_order, group_b.frequency, group_b.linewidth)])
    return ResultGrid(axes=[("tau", taus)], values=curve, metadata=meta)


# ---------------------------------------------------------------------------
# spectra


def spectrum_scan(params: SystemParams, linewidth: float, grid,
                  epsilon: float | None = None) -> ResultGrid:
    """Filtered emission spectrum from the population of a scanned sensor,
    normalized to unit total over the grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty frequency grid")
    vals = np.empty_like(grid)
    eps_used = None
    for i, w in enumerate(grid):
        sensor = SensorSpec(frequency=float(w), linewidth=linewidth, bundle_order=1)
        eps = epsilon or default_epsilon(params, (sensor,))
        eps_used = eps
        model = build_model(params, (sensor,), epsilon=eps)
        rho = solve_steady_state_sectored(model)
        vals[i] = _ladder_moment(model.xi[0], 1, rho.matrix).real
    total = vals.sum()
    if total > 0:
        vals = vals / total
    return ResultGrid(axes=[("frequency", grid)], values=vals,
                      metadata=_meta(params, linewidth=linewidth, epsilon=eps_used,
                                     normalization="unit-grid-sum"))


def _filon_transform(samples: np.ndarray, h: float, omegas: np.ndarray) -> np.ndarray:
    """(1/pi) Re int_0^T f(t) e^{i w t} dt with f linearly interpolated
    between uniform samples; exact in the oscillation, so coarse steps
    relative to the highest frequency stay accurate."""
    n = len(samples) - 1
    t = np.arange(n) * h
    out = np.empty(len(omegas))
    for i, w in enumerate(omegas):
        th = w * h
        if abs(th) < 1e-3:
            b = h * (0.5 + 1j * th / 3.0 - th * th / 8.0)
            a = h * (0.5 + 1j * th / 6.0 - th * th / 24.0)
        else:
            e = np.exp(1j * th)
            b = (h / (1j * th)) * (e - (e - 1.0) / (1j * th))
            a = (e - 1.0) / (1j * w) - b
        ph = np.exp(1j * w * t)
        out[i] = ((ph * samples[:-1]).sum() * a + (ph * samples[1:]).sum() * b).real / math.pi
    return out


def wk_spectrum_oracle(params: SystemParams, linewidth: float, grid,
                       include_coherent: bool = True,
                       tau_max: float | None = None) -> ResultGrid:
    """Filtered spectrum from the bare emitter by quantum regression.

    The two-time amplitude correlation <s+(0) s(tau)> is propagated with
    the emitter-only generator, damped by exp(-Gamma tau / 2) -- the
    time-domain form of the Lorentzian filter convolution (half-width
    Gamma/2) -- and cosine/sine transformed.  No sensors are involved,
    making this an independent check of :func:`spectrum_scan`.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("empty frequency grid")
    g = params.gamma
    model = build_model(params, (), epsilon=1.0)
    L = model.liouvillian(sparse=False)
    rho = solve_steady_state(L).matrix
    sig = np.asarray(model.sigma if not sp.issparse(model.sigma) else model.sigma.toarray())

    wmax = max(g, math.sqrt(4 * params.rabi**2 + params.detuning**2),
               float(np.abs(grid).max()), linewidth)
    h = 0.05 / wmax
    tmax = tau_max if tau_max is not None else 40.0 / g
    nsteps = int(math.ceil(tmax / h))
    step = expm(L.generator * h)

    v = vec(rho @ sig.conj().T)
    w_tr = vec(np.ascontiguousarray(sig.T))  # Tr[s X] = vec(s.T) . vec(X)
    corr = np.empty(nsteps + 1, dtype=complex)
    for k in range(nsteps + 1):
        corr[k] = np.dot(w_tr, v)
        if k < nsteps:
            v = step @ v
    coherent = complex(np.trace(sig @ rho) * np.trace(rho @ sig.conj().T))
    if abs(corr[0]) > 0 and abs(corr[-1] - coherent) > 1e-6 * abs(corr[0]):
        raise OracleError(
            f"autocorrelation not decayed at tau={tmax:.1f}: "
            f"residual {abs(corr[-1] - coherent):.3e}")

    taus = np.arange(nsteps + 1) * h
    # transform only the decaying fluctuation part numerically; the
    # constant coherent term would be truncated at tmax with an
    # O(exp(-Gamma tmax / 2)) residual, so it is added as its exact
    # filtered Lorentzian instead
    damped = (corr - coherent) * np.exp(-0.5 * linewidth * taus)
    vals = _filon_transform(damped, h, grid)
    if include_coherent:
        hw = 0.5 * linewidth
        vals = vals + coherent.real * hw / (grid**2 + hw**2) / math.pi
    total = vals.sum()
    if total > 0:
        vals = vals / total
    meta = _meta(params, linewidth=linewidth, normalization="unit-grid-sum",
                 coherent_weight=abs(coherent),
                 include_coherent=include_coherent, tau_step=h, tau_max=tmax)
    return ResultGrid(axes=[("frequency", grid)], values=vals, metadata=meta)


# ---------------------------------------------------------------------------
# scans and maps


def autocorrelation_scan(params: SystemParams, order: int, linewidth: float,
                         grid, epsilon: float | None = None) -> ResultGrid:
    """Degenerate-frequency g^(order) through a single scanned filter.

    Realized as one sensor of bundle order ``order`` (truncation
    order + 1); the ladder moment <xi+^N xi^N> against <xi+ xi>^N gives
    the normally ordered autocorrelation exactly.
    """
    if order not in (2, 3, 4):
        raise ParameterError(f"autocorrelation order must be 2, 3 or 4, got {order}")
    grid = np.asarray(grid, dtype=float)
    vals = np.full(grid.shape, math.nan)
    flags = {}
    verdicts = []
    for i, w in enumerate(grid):
        try:
            res = _converged_scalar(
                lambda e: _autocorr_at_eps(params, order, linewidth, float(w), e),
                epsilon or default_epsilon(
                    params, (SensorSpec(float(w), linewidth, order),)))
            vals[i] = res.value
            verdicts.append(res.rel_change)
            if math.isnan(res.value):
                flags[i] = "undefined: zero denominator"
        except (ConvergenceError, PrecisionError) as exc:
            flags[i] = f"{type(exc).__name__}: {exc}"
    meta = _meta(params, linewidth=linewidth, order=order,
                 max_rel_change=max(verdicts) if verdicts else math.nan)
    return ResultGrid(axes=[("frequency", grid)], values=vals, metadata=meta, flags=flags)


def _autocorr_at_eps(params, order, linewidth, w, eps):
    sensor = SensorSpec(frequency=w, linewidth=linewidth, bundle_order=order)
    model = build_model(params, (sensor,), epsilon=eps)
    rho = solve_steady_state_sectored(model)
    x = model.xi[0]
    high = _ladder_moment(x, order, rho.matrix).real
    low = _ladder_moment(x, 1, rho.matrix).real
    if abs(low) < UNDEFINED_FLOOR:
        return math.nan
    for v in (high, low):
        if 0.0 < abs(v) < MOMENT_FLOOR:
            raise PrecisionError(f"moment {v:.3e} below noise floor")
    return high / low ** order


def map2d(params: SystemParams, partition, linewidths, grid1, grid2,
          epsilon: float | None = None) -> ResultGrid:
    """Correlation map over two free sensor frequencies.

    Each grid point builds its own model and steady state; failures are
    recorded as flagged NaN without aborting the sweep.
    """
    partition = tuple(partition)
    if len(partition) != 2:
        raise ParameterError("map2d needs a two-group partition")
    grid1 = np.asarray(grid1, dtype=float)
    grid2 = np.asarray(grid2, dtype=float)
    vals = np.full((len(grid1), len(grid2)), math.nan)
    flags = {}
    for i, w1 in enumerate(grid1):
        for j, w2 in enumerate(grid2):
            req = CorrelationRequest(partition=partition,
                                     frequencies=(float(w1), float(w2)),
                                     linewidths=tuple(linewidths))
            try:
                vals[i, j] = g_zero_delay(params, req, epsilon=epsilon).value
                if math.isnan(vals[i, j]):
                    flags[(i, j)] = "undefined: zero denominator"
            except (ConvergenceError, PrecisionError) as exc:
                flags[(i, j)] = f"{type(exc).__name__}: {exc}"
    meta = _meta(params, partition=list(partition), linewidths=list(linewidths))
    return ResultGrid(axes=[("frequency_1", grid1), ("frequency_2", grid2)],
                      values=vals, metadata=meta, flags=flags)


@dataclass(frozen=True)
class PlaneSpec:
    """Affine constraint sum_k coefficients[k] * w_k = value pinning one
    degree of freedom of a three-frequency correlation volume."""

    coefficients: tuple[float, float, float]
    value: float

    def __post_init__(self):
        if len(self.coefficients) != 3 or all(c == 0 for c in self.coefficients):
            raise ParameterError("plane needs three coefficients, not all zero")

    @property
    def pivot(self) -> int:
        nz = [k for k, c in enumerate(self.coefficients) if c != 0]
        return nz[-1]

    def solve(self, free_values: dict) -> tuple[float, float, float]:
        piv = self.pivot
        acc = self.value
        out = [0.0, 0.0, 0.0]
        for k in range(3):
            if k == piv:
                continue
            out[k] = free_values[k]
            acc -= self.coefficients[k] * out[k]
        out[piv] = acc / self.coefficients[piv]
        return tuple(out)


def cut3d(params: SystemParams, plane: PlaneSpec, linewidth: float,
          grid1, grid2, epsilon: float | None = None) -> ResultGrid:
    """2-D slice of the three-photon correlation volume along ``plane``."""
    grid1 = np.asarray(grid1, dtype=float)
    grid2 = np.asarray(grid2, dtype=float)
    free = [k for k in range(3) if k != plane.pivot][:2]
    vals = np.full((len(grid1), len(grid2)), math.nan)
    flags = {}
    for i, a in enumerate(grid1):
        for j, b in enumerate(grid2):
            freqs = plane.solve({free[0]: float(a), free[1]: float(b)})
            req = CorrelationRequest(partition=(1, 1, 1), frequencies=freqs,
                                     linewidths=(linewidth,) * 3)
            try:
                vals[i, j] = g_zero_delay(params, req, epsilon=epsilon).value
                if math.isnan(vals[i, j]):
                    flags[(i, j)] = "undefined: zero denominator"
            except (ConvergenceError, PrecisionError) as exc:
                flags[(i, j)] = f"{type(exc).__name__}: {exc}"
    meta = _meta(params, linewidth=linewidth,
                 plane={"coefficients": list(plane.coefficients), "value": plane.value},
                 free_axes=free)
    return ResultGrid(axes=[(f"frequency_{free[0] + 1}", grid1),
                            (f"frequency_{free[1] + 1}", grid2)],
                      values=vals, metadata=meta, flags=flags)


def _meta(params: SystemParams, **extra) -> dict:
    meta = {"system": {"rabi": params.rabi, "detuning": params.detuning,
                       "gamma": params.gamma},
            "tool_version": __version__}
    meta.update(extra)
    return meta
