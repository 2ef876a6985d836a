"""GMRES without restarts: Arnoldi with modified Gram-Schmidt, Givens QR of the
Hessenberg matrix updated one column at a time, and a back-substitution solve.

Solves ``H d = g`` over the affine Krylov space ``d0 + K_m(H, r0)`` with
``r0 = g - H d0``. The residual norm is read off the rotated right-hand side,
so ``Q`` is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .hvp import DEFAULT_ETA, BatchHvpOperator, HvpOperator
from .tensor import DimensionError, axpy, dot, l2_norm

BREAKDOWN_TOL = 1e-12
SINGULAR_TOL = 1e-14
DEFAULT_TAU = 1e-3
DEFAULT_M_MAX = 64


class LinearOperator(Protocol):
    dimension: int

    def apply(self, v: np.ndarray) -> np.ndarray: ...


class SingularTriangularError(ArithmeticError):
    def __init__(self, index: int, value: float):
        super().__init__(f"diagonal entry R[{index},{index}] = {value:.3e} is numerically zero")
        self.index = index
        self.value = value


class MatrixOperator:
    """An explicit dense matrix viewed as a linear operator."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionError(f"need a square matrix, got {self.matrix.shape}")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v):
        return self.matrix @ v

    __call__ = apply


@dataclass
class ArnoldiState:
    """Everything one GMRES sweep accumulates.

    ``hessenberg[k]`` is the raw column ``k`` (``k + 2`` entries),
    ``r_columns[k]`` the same column after all Givens rotations (``k + 1``
    entries, upper triangular part). ``rhs`` starts as ``beta * e1`` and is
    rotated alongside; its last entry is the current residual.
    """

    basis: list[np.ndarray]
    beta: float
    hessenberg: list[np.ndarray] = field(default_factory=list)
    r_columns: list[np.ndarray] = field(default_factory=list)
    givens: list[tuple[float, float]] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    residual_norm: float = 0.0
    breakdown: bool = False

    @classmethod
    def start(cls, r0) -> "ArnoldiState":
        r0 = np.asarray(r0, dtype=np.float64)
        beta = l2_norm(r0)
        if beta == 0.0:
            raise ValueError("cannot start Arnoldi from a zero residual")
        return cls(basis=[r0 / beta], beta=beta, rhs=[beta], residual_norm=beta)

    @property
    def steps(self) -> int:
        return len(self.hessenberg)

    def hessenberg_matrix(self) -> np.ndarray:
        m = self.steps
        D = np.zeros((m + 1, m))
        for k, col in enumerate(self.hessenberg):
            D[: k + 2, k] = col
        return D

    def basis_matrix(self, count: int | None = None) -> np.ndarray:
        vecs = self.basis if count is None else self.basis[:count]
        return np.column_stack(vecs)


def arnoldi_step(state: ArnoldiState, op, breakdown_tol: float = BREAKDOWN_TOL) -> ArnoldiState:
    """Append one Hessenberg column and, unless the subspace closed, ``v_{j+1}``."""
    if state.breakdown:
        raise RuntimeError("Arnoldi already broke down; the subspace is invariant")
    j = state.steps
    w = op.apply(state.basis[j])
    h = np.zeros(j + 2)
    for i in range(j + 1):
        h[i] = dot(w, state.basis[i])
        w = axpy(-h[i], state.basis[i], w)
    h[j + 1] = l2_norm(w)
    state.hessenberg.append(h)
    if h[j + 1] < breakdown_tol * state.beta:
        state.breakdown = True
    else:
        state.basis.append(w / h[j + 1])
    return state


def givens_rotation(a: float, b: float) -> tuple[float, float, float]:
    """``(c, s, r)`` with ``[c s; -s c] @ [a, b] = [r, 0]``."""
    if b == 0.0:
        return 1.0, 0.0, a
    r = float(np.hypot(a, b))
    return a / r, b / r, r


def givens_update(state: ArnoldiState) -> ArnoldiState:
    """Rotate the newest Hessenberg column and extend the rotated rhs."""
    j = len(state.r_columns)
    if j >= state.steps:
        raise RuntimeError("no unrotated Hessenberg column to process")
    col = state.hessenberg[j].copy()
    for i, (c, s) in enumerate(state.givens):
        col[i], col[i + 1] = c * col[i] + s * col[i + 1], -s * col[i] + c * col[i + 1]
    c, s, r = givens_rotation(col[j], col[j + 1])
    col[j], col[j + 1] = r, 0.0
    state.givens.append((c, s))
    state.r_columns.append(col[: j + 1])
    head = state.rhs[j]
    state.rhs[j] = c * head
    state.rhs.append(-s * head)
    state.residual_norm = abs(state.rhs[j + 1])
    return state


def solve_triangular(R, b, tol: float = SINGULAR_TOL) -> np.ndarray:
    """Back substitution for upper-triangular ``R``."""
    R = np.asarray(R, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = b.shape[0]
    if R.shape != (m, m):
        raise DimensionError(f"R has shape {R.shape}, rhs has length {m}")
    x = np.zeros(m)
    for i in range(m - 1, -1, -1):
        if abs(R[i, i]) <= tol:
            raise SingularTriangularError(i, R[i, i])
        x[i] = (b[i] - R[i, i + 1 :] @ x[i + 1 :]) / R[i, i]
    return x


@dataclass
class GmresResult:
    solution: np.ndarray
    iterations: int
    final_relative_residual: float
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    breakdown: bool = False


def _check_solver_args(tau, m_max):
    # tau == 0 is accepted and means "never stop before m_max".
    if not tau >= 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if int(m_max) != m_max or m_max < 1:
        raise ValueError(f"m_max must be a positive integer, got {m_max}")


def _least_squares_solution(r_columns, rhs, m) -> np.ndarray:
    R = np.zeros((m, m))
    for k in range(m):
        R[: k + 1, k] = r_columns[k]
    # The reduced system is homogeneous in the scale of H; normalising keeps the
    # absolute singularity test meaningful for tiny-curvature inputs.
    scale = np.abs(R).max()
    if scale == 0.0:
        raise SingularTriangularError(0, 0.0)
    return solve_triangular(R / scale, np.asarray(rhs[:m]) / scale)


def gmres(op, g, delta0=None, tau: float = DEFAULT_TAU, m_max: int = DEFAULT_M_MAX) -> GmresResult:
    """Minimise ``||g - H d||`` over ``d in delta0 + K_m``, stopping once
    ``||r_m|| / ||r_0|| < tau`` or after ``m_max`` Arnoldi steps.

    Hitting ``m_max`` is not an error: the best least-squares iterate is
    returned with ``converged=False``.
    """
    _check_solver_args(tau, m_max)
    g = np.asarray(g, dtype=np.float64)
    delta0 = np.zeros_like(g) if delta0 is None else np.asarray(delta0, dtype=np.float64)
    if g.shape != delta0.shape or g.size != op.dimension:
        raise DimensionError(
            f"g {g.shape}, delta0 {delta0.shape}, operator dimension {op.dimension}"
        )
    r0 = axpy(-1.0, op.apply(delta0), g)
    beta = l2_norm(r0)
    if beta == 0.0:
        return GmresResult(delta0.copy(), 0, 0.0, True, [0.0])

    state = ArnoldiState.start(r0)
    history = [1.0]
    r_max = 0.0
    m = 0
    for _ in range(int(m_max)):
        arnoldi_step(state, op)
        givens_update(state)
        newest = state.r_columns[-1]
        r_max = max(r_max, float(np.abs(newest).max()))
        if abs(newest[-1]) <= SINGULAR_TOL * r_max:
            # H v_j is numerically dependent on the basis: the new column cannot
            # lower the residual, so the solve drops it and the sweep ends.
            state.breakdown = True
            break
        m = state.steps
        history.append(state.residual_norm / beta)
        if history[-1] < tau or state.breakdown:
            break
    if m == 0:
        return GmresResult(delta0.copy(), state.steps, 1.0, 1.0 < tau, history, True)
    gamma = _least_squares_solution(state.r_columns, state.rhs, m)
    solution = delta0 + state.basis_matrix(m) @ gamma
    rel = history[-1]
    return GmresResult(solution, state.steps, rel, rel < tau, history, state.breakdown)


def approximate_newton_direction(
    model,
    x,
    y,
    eta: float = DEFAULT_ETA,
    tau: float = DEFAULT_TAU,
    m_max: int = DEFAULT_M_MAX,
    central: bool = False,
) -> tuple[np.ndarray, GmresResult]:
    """Approximate ``H^{-1} g`` at ``x`` starting from ``delta0 = g``.

    ``model`` is anything with ``input_gradient(x, y)``.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(model.input_gradient(x, y), dtype=np.float64)
    op = HvpOperator.from_model(model, x, y, eta=eta, central=central, base_gradient=g)
    result = gmres(op, g, g, tau=tau, m_max=min(int(m_max), x.size))
    return result.solution, result


@dataclass
class BatchGmresResult:
    solution: np.ndarray  # (B, d)
    iterations: np.ndarray  # (B,)
    final_relative_residual: np.ndarray  # (B,)
    converged: np.ndarray  # (B,) bool


def gmres_batched(
    op: BatchHvpOperator, G, Delta0, tau: float = DEFAULT_TAU, m_max: int = DEFAULT_M_MAX
) -> BatchGmresResult:
    """Row-by-row GMRES on a batch of independent systems sharing one operator call.

    Rows follow exactly the same recurrence as :func:`gmres`; a row stops
    receiving operator applications once it converges or breaks down.
    """
    _check_solver_args(tau, m_max)
    G = np.asarray(G, dtype=np.float64)
    Delta0 = np.asarray(Delta0, dtype=np.float64)
    if G.shape != Delta0.shape or G.ndim != 2:
        raise DimensionError(f"G {G.shape} and Delta0 {Delta0.shape} must be equal 2-D shapes")
    B, d = G.shape
    m_max = min(int(m_max), d)

    R0 = G - op.apply(Delta0)
    beta = np.sqrt(np.einsum("ij,ij->i", R0, R0))
    V = np.zeros((B, m_max + 1, d))
    Hc = np.zeros((B, m_max + 1, m_max))  # rotated columns
    cs = np.zeros((B, m_max))
    sn = np.zeros((B, m_max))
    rhs = np.zeros((B, m_max + 1))
    iters = np.zeros(B, dtype=np.int64)  # Arnoldi steps taken
    used = np.zeros(B, dtype=np.int64)  # columns kept for the solve
    r_max = np.zeros(B)
    rel = np.where(beta > 0.0, 1.0, 0.0)
    active = beta > 0.0
    V[active, 0] = R0[active] / beta[active, None]
    rhs[:, 0] = beta

    for j in range(m_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        w = op.apply(V[idx, j], rows=idx)
        h = np.zeros((idx.size, j + 2))
        for i in range(j + 1):
            vi = V[idx, i]
            h[:, i] = np.einsum("ij,ij->i", w, vi)
            w -= h[:, i, None] * vi
        h[:, j + 1] = np.sqrt(np.einsum("ij,ij->i", w, w))
        broke = h[:, j + 1] < BREAKDOWN_TOL * beta[idx]
        ok = ~broke
        V[idx[ok], j + 1] = w[ok] / h[ok, j + 1, None]

        for i in range(j):
            c, s = cs[idx, i], sn[idx, i]
            a, b = h[:, i].copy(), h[:, i + 1].copy()
            h[:, i] = c * a + s * b
            h[:, i + 1] = -s * a + c * b
        a, b = h[:, j], h[:, j + 1]
        r = np.hypot(a, b)
        zero_b = b == 0.0
        safe_r = np.where(zero_b, 1.0, r)
        c = np.where(zero_b, 1.0, a / safe_r)
        s = np.where(zero_b, 0.0, b / safe_r)
        h[:, j] = np.where(zero_b, a, r)
        h[:, j + 1] = 0.0
        cs[idx, j], sn[idx, j] = c, s
        Hc[idx, : j + 2, j] = h
        head = rhs[idx, j].copy()
        rhs[idx, j] = c * head
        rhs[idx, j + 1] = -s * head

        iters[idx] = j + 1
        r_max[idx] = np.maximum(r_max[idx], np.abs(h[:, : j + 1]).max(axis=1))
        singular = np.abs(h[:, j]) <= SINGULAR_TOL * r_max[idx]
        kept = idx[~singular]
        used[kept] = j + 1
        rel[kept] = np.abs(rhs[kept, j + 1]) / beta[kept]
        done = singular | broke | (rel[idx] < tau)
        active[idx[done]] = False

    solution = Delta0.copy()
    for row in np.flatnonzero(used > 0):
        m = int(used[row])
        cols = [Hc[row, : k + 1, k] for k in range(m)]
        gamma = _least_squares_solution(cols, rhs[row], m)
        solution[row] += gamma @ V[row, :m]
    return BatchGmresResult(solution, iters, rel, (rel < tau) | (beta == 0.0))
