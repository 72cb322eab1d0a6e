"""Truncated mode operators, tensor embeddings and Liouvillian assembly.

Vectorization convention (used everywhere in this package): column
stacking.  The matrix element ``rho[i, j]`` maps to vector index
``j * D + i`` (numpy ``reshape(..., order="F")``), so that

    vec(A @ rho @ B) == kron(B.T, A) @ vec(rho).

Operators are dense ``numpy`` arrays below ``SPARSE_THRESHOLD`` total
dimension and ``scipy.sparse`` matrices above it; both storage paths
produce identical generators to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import LayoutError, ModelError, ParameterError

#: Composite dimension above which sparse storage is the default.
SPARSE_THRESHOLD = 16

#: Tolerance for Hermiticity of Hamiltonians fed to the assembler.
HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered local dimensions of the composite space.

    Slot 0 is the emitter (dimension 2); the remaining slots are sensor
    modes truncated to ``dims[k]`` Fock states.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) < 1 or self.dims[0] != 2:
            raise LayoutError("slot 0 must be the two-level emitter")
        if any(d < 2 for d in self.dims):
            raise LayoutError(f"every local dimension must be >= 2, got {self.dims}")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def local_indices(self, slot: int) -> np.ndarray:
        """Local basis index of ``slot`` for each composite basis state."""
        if not 0 <= slot < len(self.dims):
            raise LayoutError(f"slot {slot} out of range for {self.dims}")
        after = int(np.prod(self.dims[slot + 1:])) if slot + 1 < len(self.dims) else 1
        return (np.arange(self.total_dim) // after) % self.dims[slot]


@dataclass
class Liouvillian:
    """Master-equation generator under the column-stacking convention."""

    generator: object  # dense ndarray or scipy sparse, (D^2, D^2)
    layout: SpaceLayout
    vectorization: str = field(default="column", repr=False)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.generator):
            return self.generator.toarray()
        return np.asarray(self.generator)


def annihilation_op(dim: int) -> np.ndarray:
    """Lowering operator on a ``dim``-level ladder: entries sqrt(m) at (m-1, m)."""
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise ParameterError(f"annihilation operator needs dim >= 2, got {dim!r}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def lift(op, slot: int, layout: SpaceLayout, sparse: bool | None = None):
    """Embed ``op`` acting on ``slot`` into the composite space.

    Returns identity (x) ... (x) op (x) ... (x) identity with ``op`` in
    position ``slot``.
    """
    if not 0 <= slot < len(layout.dims):
        raise LayoutError(f"slot {slot} out of range for layout {layout.dims}")
    d = op.shape[0] if hasattr(op, "shape") else len(op)
    if op.shape != (layout.dims[slot], layout.dims[slot]):
        raise LayoutError(
            f"operator of shape {op.shape} does not fit slot {slot} "
            f"with local dimension {layout.dims[slot]}"
        )
    del d
    if sparse is None:
        sparse = layout.total_dim > SPARSE_THRESHOLD
    if sparse:
        out = sp.identity(1, dtype=complex, format="csr")
        for k, dk in enumerate(layout.dims):
            blk = sp.csr_matrix(op) if k == slot else sp.identity(dk, dtype=complex, format="csr")
            out = sp.kron(out, blk, format="csr")
        return out
    out = np.eye(1, dtype=complex)
    for k, dk in enumerate(layout.dims):
        blk = np.asarray(op, dtype=complex) if k == slot else np.eye(dk, dtype=complex)
        out = np.kron(out, blk)
    return out


def _hermiticity_defect(H) -> float:
    if sp.issparse(H):
        return float(abs(H - H.conj().T).max())
    H = np.asarray(H)
    return float(np.abs(H - H.conj().T).max())


def build_liouvillian(H, dissipators, layout: SpaceLayout,
                      sparse: bool | None = None) -> Liouvillian:
    """Assemble the generator of  d rho/dt = i[rho, H] + sum (rate/2) L_c rho
    with  L_c rho = 2 c rho c+  -  c+ c rho  -  rho c+ c.

    ``dissipators`` is a list of (rate, collapse operator) pairs; the 1/2
    sits outside L_c, so a mode with decay rate G enters as (G, c).
    """
    D = layout.total_dim
    if _hermiticity_defect(H) > HERMITICITY_TOL * max(1.0, float(abs(H).max() if sp.issparse(H) else np.abs(H).max())):
        raise ModelError("Hamiltonian is not Hermitian within tolerance")
    for rate, _ in dissipators:
        if rate < 0:
            raise ModelError(f"negative dissipation rate {rate}")
    if sparse is None:
        sparse = D > SPARSE_THRESHOLD

    if sparse:
        Hs = sp.csr_matrix(H)
        eye = sp.identity(D, dtype=complex, format="csr")
        L = 1j * (sp.kron(Hs.T, eye, format="csr") - sp.kron(eye, Hs, format="csr"))
        for rate, c in dissipators:
            cs = sp.csr_matrix(c)
            cdc = (cs.conj().T @ cs).tocsr()
            L = L + (rate / 2.0) * (
                2.0 * sp.kron(cs.conj(), cs, format="csr")
                - sp.kron(eye, cdc, format="csr")
                - sp.kron(cdc.T, eye, format="csr")
            )
        return Liouvillian(L.tocsr(), layout)

    Hd = np.asarray(H, dtype=complex)
    eye = np.eye(D, dtype=complex)
    L = 1j * (np.kron(Hd.T, eye) - np.kron(eye, Hd))
    for rate, c in dissipators:
        cd = np.asarray(c, dtype=complex)
        cdc = cd.conj().T @ cd
        L += (rate / 2.0) * (
            2.0 * np.kron(cd.conj(), cd) - np.kron(eye, cdc) - np.kron(cdc.T, eye)
        )
    return Liouvillian(L, layout)


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacked vector of a matrix."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, D: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((D, D), order="F")


def trace_indices(D: int) -> np.ndarray:
    """Vector indices of the diagonal elements rho[i, i]."""
    return np.arange(D) * D + np.arange(D)
