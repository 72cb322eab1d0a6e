"""Stationary density matrices of composite Liouvillians.

Two solvers live here:

* :func:`solve_steady_state` — generic path: one redundant balance
  equation (the row of a diagonal density-matrix element, where the
  trace left-null-vector has support) is replaced by the trace
  constraint and the system is solved by direct factorization, with a
  preconditioned Krylov fallback above the dense cap.

* :func:`solve_steady_state_sectored` — model-aware path used by the
  correlator layer.  Unknowns are rescaled by eps^(sensor excitation),
  and the system is swept sector by sector in ascending excitation.
  This equilibrates the solve so that the tiny high-order sensor
  moments (which scale like eps^(2n)) come out with full relative
  accuracy instead of drowning in cancellation against the O(1)
  emitter sector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegeneracyError, SolverError
from .model import CompositeModel
from .operators import Liouvillian, SpaceLayout, trace_indices, unvec, vec

#: Above this many rows of the generator, the direct solver hands over
#: to the iterative fallback.
DIRECT_ROW_CAP = 16384


@dataclass
class DensityMatrix:
    """State on the composite space; Hermitian, unit trace."""

    matrix: np.ndarray
    layout: SpaceLayout

    @property
    def dim(self) -> int:
        return self.layout.total_dim


@dataclass
class ValidationReport:
    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float
    residual: float | None
    ok: bool


def _trace_row_choice(diag_entries: np.ndarray, dr: np.ndarray) -> int:
    """Replaced row: the diagonal-element balance equation with the
    largest diagonal magnitude (deterministic, well conditioned)."""
    return int(dr[int(np.argmax(np.abs(diag_entries)))])


def _direct_solve(L, D: int) -> np.ndarray:
    dr = trace_indices(D)
    dense = not sp.issparse(L)
    if dense:
        A = np.array(L, dtype=complex)
        r = _trace_row_choice(A[dr, dr], dr)
        w = float(np.mean(np.abs(np.diag(A)))) or 1.0
        A[r, :] = 0.0
        A[r, dr] = w
        b = np.zeros(D * D, dtype=complex)
        b[r] = w
        return np.linalg.solve(A, b)
    A = L.tolil(copy=True)
    diag = L.diagonal()
    r = _trace_row_choice(diag[dr], dr)
    w = float(np.mean(np.abs(diag))) or 1.0
    A.rows[r] = list(map(int, dr))
    A.data[r] = [w] * D
    b = np.zeros(D * D, dtype=complex)
    b[r] = w
    return spla.spsolve(A.tocsc(), b)


def _iterative_solve(L, D: int) -> np.ndarray:
    A = sp.csr_matrix(L) if not sp.issparse(L) else L.tocsr()
    dr = trace_indices(D)
    diag = A.diagonal()
    r = _trace_row_choice(diag[dr], dr)
    w = float(np.mean(np.abs(diag))) or 1.0
    A = A.tolil()
    A.rows[r] = list(map(int, dr))
    A.data[r] = [w] * D
    A = A.tocsc()
    b = np.zeros(D * D, dtype=complex)
    b[r] = w
    try:
        ilu = spla.spilu(A, drop_tol=1e-8, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError as exc:
        raise SolverError(f"incomplete factorization failed: {exc}") from exc
    x, info = spla.gmres(A, b, M=M, rtol=1e-12, atol=0.0, restart=80, maxiter=400)
    if info != 0:
        res = float(np.linalg.norm(A @ x - b))
        raise SolverError(f"iterative steady-state solve stalled (info={info}, residual={res:.3e})")
    return x


def _finish(v: np.ndarray, layout: SpaceLayout) -> DensityMatrix:
    rho = unvec(v, layout.total_dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-300:
        raise SolverError("steady-state solve returned a traceless matrix")
    return DensityMatrix(matrix=rho / tr, layout=layout)


def solve_steady_state(L: Liouvillian, method: str = "auto") -> DensityMatrix:
    """Unique stationary state of a trace-preserving generator.

    ``method`` is one of ``auto`` (direct below the row cap), ``direct``
    or ``iterative``.
    """
    D = L.dim
    if method == "auto":
        method = "direct" if D * D <= DIRECT_ROW_CAP else "iterative"
    try:
        if method == "direct":
            v = _direct_solve(L.generator, D)
        elif method == "iterative":
            v = _iterative_solve(L.generator, D)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"steady-state factorization failed: {exc}") from exc
    rho = _finish(v, L.layout)
    gen = L.generator
    scale = float(abs(gen).max() if sp.issparse(gen) else np.abs(gen).max())
    res = float(np.max(np.abs(gen @ vec(rho.matrix))))
    if res > 1e-10 * max(scale, 1.0):
        raise SolverError(f"steady-state residual {res:.3e} above tolerance")
    return rho


def assert_unique_steady_state(L: Liouvillian, tol: float = 1e-7):
    """Check the null space is one-dimensional: a second candidate
    orthogonalized against the steady state must have a large residual."""
    rho = solve_steady_state(L)
    v0 = vec(rho.matrix)
    v0 = v0 / np.linalg.norm(v0)
    A = L.toarray()
    rng = np.random.default_rng(7)
    scale = max(float(np.abs(A).max()), 1.0)
    for _ in range(3):
        w = rng.standard_normal(len(v0)) + 1j * rng.standard_normal(len(v0))
        w -= (v0.conj() @ w) * v0
        w /= np.linalg.norm(w)
        if np.linalg.norm(A @ w) < tol * scale:
            raise DegeneracyError("second near-null vector found: steady state not unique")
    return True


def solve_steady_state_sectored(model: CompositeModel, max_sweeps: int = 80,
                                tol: float = 1e-13) -> DensityMatrix:
    """Stationary state via excitation-sector forward substitution.

    Unknowns are scaled by eps^(row excitation + column excitation); the
    scaled generator is block tri-/penta-diagonal in total sensor
    excitation, with only O(eps^2) feedback toward lower sectors.  A
    forward pass plus a few Gauss-Seidel sweeps therefore converges to
    the exact finite-eps solution while every sector is solved at its
    own scale.
    """
    layout = model.layout
    D = layout.total_dim
    L = model.liouvillian().toarray()
    eps = model.epsilon

    exc_basis = model.sensor_excitations()
    n = D * D
    rows = np.arange(n) % D
    cols = np.arange(n) // D
    e = (exc_basis[rows] + exc_basis[cols]).astype(int)
    emax = int(e.max())
    # the sector hierarchy needs a perturbative coupling; at eps = O(1)
    # the scaling buys nothing and the sweep can diverge, so hand over
    if emax == 0 or eps >= 0.5:
        return solve_steady_state(model.liouvillian())
    scale = eps ** e.astype(float)

    A = (L * scale[None, :]) / scale[:, None]
    sectors = [np.where(e == k)[0] for k in range(emax + 1)]
    dr = trace_indices(D)
    is_diag = np.zeros(n, dtype=bool)
    is_diag[dr] = True

    factors = []
    trace_row = None
    w0 = None
    d0 = None
    for k, idx in enumerate(sectors):
        blk = A[np.ix_(idx, idx)].copy()
        if k == 0:
            d0 = np.where(is_diag[idx])[0]
            trace_row = d0[int(np.argmax(np.abs(blk[d0, d0])))]
            w0 = float(np.mean(np.abs(np.diag(blk)))) or 1.0
            blk[trace_row, :] = 0.0
            blk[trace_row, d0] = w0 * scale[idx[d0]]
        factors.append(sla.lu_factor(blk))

    x = np.zeros(n, dtype=complex)
    converged = False
    for _ in range(max_sweeps):
        x_prev = x.copy()
        for k, idx in enumerate(sectors):
            rhs = A[np.ix_(idx, idx)] @ x[idx] - A[idx, :] @ x
            if k == 0:
                higher = complex(0.0)
                for m in range(1, emax + 1):
                    sel = sectors[m][is_diag[sectors[m]]]
                    higher += scale[sel] @ x[sel]
                rhs[trace_row] = w0 * (1.0 - higher)
            x[idx] = sla.lu_solve(factors[k], rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("sectored steady-state sweep diverged; "
                              "coupling too large for the sector hierarchy")
        delta = float(np.max(np.abs(x - x_prev))) / max(float(np.max(np.abs(x))), 1e-300)
        if delta < tol:
            converged = True
            break
    if not converged:
        raise SolverError(f"sectored steady-state sweep did not converge (last delta {delta:.3e})")
    v = scale * x
    res = float(np.max(np.abs(L @ v))) / max(float(np.max(np.abs(v))), 1e-300)
    if res > 1e-9 * float(np.abs(L).max()):
        raise SolverError(f"sectored steady-state residual {res:.3e} above tolerance")
    return _finish(v, layout)


def validate_density_matrix(rho: DensityMatrix, L: Liouvillian | None = None,
                            herm_tol: float = 1e-10, trace_tol: float = 1e-10,
                            positivity_tol: float = -1e-8) -> ValidationReport:
    """Report (never raise) the defects of a candidate density matrix."""
    m = rho.matrix
    herm = float(np.abs(m - m.conj().T).max())
    trace = float(abs(np.trace(m).real - 1.0))
    # clamp solver-floor negatives in the report only; stored data untouched
    mineig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    residual = None
    ok = herm <= herm_tol and trace <= trace_tol and mineig >= positivity_tol
    if L is not None:
        gen = L.generator
        scale = float(abs(gen).max() if sp.issparse(gen) else np.abs(gen).max())
        residual = float(np.max(np.abs(gen @ vec(m))))
        ok = ok and residual <= 1e-10 * max(scale, 1.0)
    return ValidationReport(hermiticity_defect=herm, trace_defect=trace,
                            min_eigenvalue=mineig, residual=residual, ok=ok)
