"""Sparse solvers and the generalized singular value used for inf-sup constants.

Sparse storage is `scipy.sparse.csr_array` with sorted, unique column
indices. Direct solves use SuperLU; GMRES is SciPy's restarted GMRES with
an optional ILU(0) preconditioner implemented here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SingularMatrixError, SizeCapError

DENSE_CAP = 4000
GMRES_RESTART = 200


@dataclass
class SolveReport:
    solver: str
    iterations: int
    relative_residual: float
    wall_time: float
    converged: bool = True


def as_complex_sparse(A) -> sp.csr_array:
    A = sp.csr_array(A, dtype=complex)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _rel_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _plane_separator(sub, x, tol=1e-9, tries=12):
    """A level set ``x == c`` near the median that decouples ``x < c`` from ``x > c``."""
    med = np.median(x)
    cand = np.unique(np.round(x, 9))
    cand = cand[np.argsort(np.abs(cand - med))][:tries]
    for c in cand:
        sep = np.abs(x - c) < tol
        low, high = x < c - tol, x > c + tol
        if not low.any() or not high.any():
            continue
        if sub[low][:, high].nnz == 0:
            return low, sep
    return None


def nested_dissection(A, coords: np.ndarray, leaf: int = 64) -> np.ndarray:
    """Fill-reducing ordering by recursive coordinate bisection.

    Each level cuts the longest bounding-box axis near the median. A
    coordinate plane whose dofs alone decouple the two sides is preferred
    (for grid-aligned meshes these are the entities lying on a mesh plane);
    otherwise the lower-side dofs coupled to the upper side form the
    separator. Separators are numbered after both halves.
    """
    G = sp.csr_array(A)
    G = sp.csr_array((np.ones(G.nnz, dtype=np.int8), G.indices, G.indptr), shape=G.shape)
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (G.shape[0], 3):
        raise InvalidArgumentError("coords must have one 3-vector per row")
    out = []
    stack = [(np.arange(G.shape[0]), 0)]
    # explicit post-order: (idx, 0) = split, (sep, 1) = emit
    while stack:
        idx, emit = stack.pop()
        if emit or len(idx) <= leaf:
            out.append(idx)
            continue
        P = coords[idx]
        ax = int(np.argmax(P.max(axis=0) - P.min(axis=0)))
        sub = G[idx][:, idx]
        split = _plane_separator(sub, P[:, ax])
        if split is not None:
            low, sep = split
            high = ~(low | sep)
        else:
            low = P[:, ax] <= np.median(P[:, ax])
            if low.all() or not low.any():
                out.append(idx)
                continue
            sep = low & ((sub @ (~low).astype(np.int32)) > 0)
            low = low & ~sep
            high = ~(low | sep)
        stack.append((idx[sep], 1))
        stack.append((idx[high], 0))
        stack.append((idx[low], 0))
    perm = np.concatenate(out)
    if len(perm) != G.shape[0]:
        raise AssertionError("nested dissection lost rows")
    return perm


class LUFactor:
    """SuperLU factors, optionally in a nested-dissection ordering and in single precision.

    ``solve`` always returns double precision; single-precision factors are
    followed by iterative refinement against the double-precision matrix.
    """

    def __init__(self, A, coords=None, single: bool = False):
        A = sp.csc_array(A, dtype=complex)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError("matrix must be square")
        self.A = sp.csr_array(A)
        self.single = single
        n = A.shape[0]
        if coords is not None:
            self.perm = nested_dissection(A, coords)
            self.inv = np.empty_like(self.perm)
            self.inv[self.perm] = np.arange(n)
            Ap = sp.csc_array(A[self.perm][:, self.perm])
            kw = dict(permc_spec="NATURAL", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        else:
            self.perm = self.inv = None
            Ap = A
            kw = dict(permc_spec="COLAMD")
        if single:
            Ap = Ap.astype(np.complex64)
        try:
            self._lu = spla.splu(Ap, **kw)
        except RuntimeError:
            # a zero diagonal pivot: keep the ordering, allow row interchanges
            kw.update(diag_pivot_thresh=1.0, options={})
            try:
                self._lu = spla.splu(Ap, **kw)
            except RuntimeError as exc:
                raise SingularMatrixError(str(exc)) from exc
        self.shape = A.shape

    def _raw(self, b, trans):
        if self.perm is not None:
            b = b[self.perm]
        if self.single:
            b = b.astype(np.complex64)
        x = self._lu.solve(b, trans=trans).astype(complex)
        return x[self.inv] if self.perm is not None else x

    def solve(self, b, trans: str = "N", refine: int | None = None):
        b = np.asarray(b, dtype=complex)
        x = self._raw(b, trans)
        steps = (8 if self.single else 0) if refine is None else refine
        if steps:
            op = {"N": self.A, "T": self.A.T, "H": self.A.conj().T}[trans]
            nb = np.linalg.norm(b)
            for _ in range(steps):
                r = b - op @ x
                if np.linalg.norm(r) <= 1e-15 * nb:
                    break
                x = x + self._raw(r, trans)
        return x


def lu_factor(A, coords=None, single: bool = False) -> LUFactor:
    return LUFactor(A, coords=coords, single=single)


def lu_solve(A, b, lu=None, coords=None, single: bool = False) -> tuple[np.ndarray, SolveReport]:
    """Sparse LU with a fill-reducing ordering and a residual check.

    Without coordinates: COLAMD with partial pivoting. With dof coordinates:
    nested dissection with diagonal pivoting (structurally symmetric FE
    systems), falling back to partial pivoting on a zero pivot. Up to four
    refinement steps are taken before the residual test.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    if A.shape[0] != len(b):
        raise InvalidArgumentError("right-hand side length does not match the matrix")
    lu = lu_factor(A, coords=coords, single=single) if lu is None else lu
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("LU produced non-finite values")
    Amax = abs(A).max() if A.nnz else 0.0
    nb = np.linalg.norm(b)
    for _ in range(4):
        r = b - A @ x
        res = np.linalg.norm(r)
        bound = 1e-10 * (Amax * np.abs(x).sum() + nb)
        if res <= bound and res <= 1e-13 * max(nb, 1e-300):
            break
        x = x + lu.solve(r)
    if res > bound:
        raise SingularMatrixError(f"LU residual {res:.3e} exceeds {bound:.3e}")
    kind = "lu32" if getattr(lu, "single", False) else "lu"
    return x, SolveReport(kind, 0, _rel_residual(A, x, b), time.perf_counter() - t0)


def ilu0(A) -> spla.LinearOperator:
    """Incomplete LU with the sparsity pattern of ``A``."""
    A = as_complex_sparse(A)
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data.copy()
    diag = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i] : indptr[i + 1]]
        pos = np.searchsorted(row, i)
        if pos >= len(row) or row[pos] != i:
            raise SingularMatrixError(f"ILU(0): zero diagonal in row {i}")
        diag[i] = indptr[i] + pos
    for i in range(1, n):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        lookup = dict(zip(cols.tolist(), range(lo, hi)))
        for jj in range(lo, diag[i]):
            kcol = indices[jj]
            piv = data[diag[kcol]]
            if piv == 0:
                raise SingularMatrixError("ILU(0): zero pivot")
            data[jj] /= piv
            f = data[jj]
            for kk in range(diag[kcol] + 1, indptr[kcol + 1]):
                pos = lookup.get(indices[kk])
                if pos is not None:
                    data[pos] -= f * data[kk]
    LU = sp.csr_array((data, indices, indptr), shape=A.shape)
    L = sp.tril(LU, k=-1, format="csr") + sp.eye_array(n, format="csr")
    U = sp.triu(LU, format="csr")

    def apply(v):
        y = spla.spsolve_triangular(L, v, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(U, y, lower=False)

    return spla.LinearOperator(A.shape, matvec=apply, dtype=complex)


def gmres_solve(A, b, tol: float = 1e-10, maxit: int = 1000, preconditioner: str | None = None):
    """Restarted GMRES(200). Non-convergence is reported, not raised."""
    if not 0.0 < tol < 1.0:
        raise InvalidArgumentError("tol must lie in (0, 1)")
    t0 = time.perf_counter()
    A = as_complex_sparse(A)
    b = np.asarray(b, dtype=complex)
    if np.linalg.norm(b) == 0:
        return np.zeros_like(b), SolveReport("gmres", 0, 0.0, 0.0)
    M = None
    if preconditioner in ("ILU0", "ilu0"):
        M = ilu0(A)
    elif preconditioner not in (None, "None", "none"):
        raise InvalidArgumentError(f"unknown preconditioner {preconditioner!r}")
    iters = 0
    best = {"x": None, "res": np.inf}

    def count(_):
        nonlocal iters
        iters += 1

    try:
        x, info = spla.gmres(
            A, b, rtol=tol, atol=0.0, restart=GMRES_RESTART, maxiter=maxit,
            M=M, callback=count, callback_type="pr_norm",
        )
    except (ValueError, ZeroDivisionError, np.linalg.LinAlgError):
        x, info = np.zeros_like(b), -1
    res = _rel_residual(A, x, b)
    if res < best["res"]:
        best = {"x": x, "res": res}
    ok = info == 0 and res <= tol * 10
    return best["x"], SolveReport("gmres", iters, best["res"], time.perf_counter() - t0, ok)


def _check_hpd_dense(N: np.ndarray) -> np.ndarray:
    try:
        return sla.cholesky(N, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError("N is not Hermitian positive definite") from exc


def min_generalized_singular(A, N, dense_cap: int = DENSE_CAP, tol: float = 1e-8) -> float:
    """``min_u max_v |v^H A u| / (|u|_N |v|_N)``.

    Dense path: smallest singular value of ``L^{-1} A L^{-H}`` with ``N = L L^H``.
    Large path: Lanczos on ``N A^{-1} N A^{-H} N`` against ``N`` (largest
    eigenvalue ``1/gamma^2``), using sparse LU factors of ``A`` and ``N``.
    """
    n = A.shape[0]
    if n <= dense_cap:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Nd = N.toarray() if sp.issparse(N) else np.asarray(N)
        if not np.allclose(Nd, Nd.conj().T, rtol=0, atol=1e-12 * np.abs(Nd).max()):
            raise InvalidArgumentError("N is not Hermitian")
        L = _check_hpd_dense(Nd)
        C = sla.solve_triangular(L, Ad, lower=True)
        C = sla.solve_triangular(L, C.conj().T, lower=True).conj().T
        return float(sla.svdvals(C).min())
    return _min_singular_iterative(A, N, tol)


def _min_singular_iterative(A, N, tol):
    A = sp.csc_array(A, dtype=complex)
    N = sp.csc_array(N, dtype=complex)
    luA = lu_factor(A)
    luN = lu_factor(N)
    n = A.shape[0]

    def op(x):
        y = N @ x
        y = luA.solve(y, trans="H")
        y = N @ y
        y = luA.solve(y)
        return N @ y

    Op = spla.LinearOperator((n, n), matvec=op, dtype=complex)
    Minv = spla.LinearOperator((n, n), matvec=luN.solve, dtype=complex)
    mu = spla.eigsh(Op, k=1, M=N, Minv=Minv, which="LA", tol=tol, return_eigenvectors=False)
    if mu[0] <= 0:
        raise InvalidArgumentError("N is not positive definite")
    return float(1.0 / np.sqrt(mu[0]))


def check_dense_cap(n: int, cap: int = DENSE_CAP, large_ok: bool = False):
    if n > cap and not large_ok:
        raise SizeCapError(
            f"system has {n} dofs, above the dense cap {cap}; "
            "use a coarser mesh or pass large_ok=True for the iterative path"
        )


def dual_norm_sq(q: np.ndarray, N, coords=None) -> float:
    """``q^H N^{-1} q`` for a Hermitian positive definite ``N``."""
    if sp.issparse(N):
        y = lu_factor(N, coords=coords).solve(np.asarray(q, dtype=complex))
    else:
        y = sla.cho_solve(sla.cho_factor(np.asarray(N)), q)
    return float(np.real(np.vdot(q, y)))
