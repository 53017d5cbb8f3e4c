"""Dense Hermitian semidefinite programming.

Solves  min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0  (Hermitian PSD), with the dual
max b.y  s.t.  C - sum_i y_i A_i >= 0, via an infeasible primal-dual interior-point
method with Nesterov-Todd scaling and a Mehrotra-style centering heuristic.
Problem sizes here are tiny (dimension <= ~120, a few dozen constraints), so every
linear-algebra step is dense and robustness wins over scalability.

The same iteration runs either directly in complex Hermitian arithmetic or on the
real-symmetric embedding [[Re, -Im], [Im, Re]]; the two routes agree to solver
tolerance and the embedding route doubles as a cross-check.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la


@dataclass(frozen=True)
class SDPOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iterations: int = 200
    step_fraction: float = 0.98
    prune_tol: float = 1e-9


@dataclass(frozen=True)
class SDPProblem:
    objective: np.ndarray
    constraints: list[tuple[np.ndarray, float]]
    options: SDPOptions = field(default_factory=SDPOptions)

    def __post_init__(self):
        n = self.objective.shape[0]
        if self.objective.shape != (n, n):
            raise ValueError("objective must be square")
        if not self.constraints:
            raise ValueError("at least one constraint (normalization) is required")
        for i, (a, _) in enumerate(self.constraints):
            if a.shape != (n, n):
                raise ValueError(
                    f"constraint {i} has shape {a.shape}, expected {(n, n)}"
                )
            if np.max(np.abs(a - a.conj().T)) > 1e-10:
                raise ValueError(f"constraint {i} is not Hermitian")

    @property
    def dim(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class SDPSolution:
    x: np.ndarray
    y: np.ndarray  # multipliers for the full original constraint list
    status: str  # optimal | infeasible | max-iterations
    gap: float
    primal_objective: float
    dual_objective: float
    iterations: int
    gap_history: tuple[float, ...]
    pruned_constraints: tuple[int, ...]
    dual_slack_min_eig: float
    max_residual: float


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.sum(a.conj() * b)))


def _prune_constraints(
    mats: list[np.ndarray], rhs: np.ndarray, tol: float
) -> tuple[list[int], list[int]]:
    """Indices of an independent constraint subset (earliest kept, in order).

    Dependent constraints must be consistent with the kept ones; otherwise the
    system is reported as contradictory with the offending indices.
    """
    m = len(mats)
    vecs = np.stack(
        [np.concatenate((mat.real.ravel(), mat.imag.ravel())) for mat in mats]
    )
    keep: list[int] = []
    basis: list[np.ndarray] = []
    for i in range(m):
        v = vecs[i].copy()
        norm0 = np.linalg.norm(v)
        for u in basis:
            v -= (u @ v) * u
        # re-orthogonalize once for numerical safety
        for u in basis:
            v -= (u @ v) * u
        if np.linalg.norm(v) > max(tol, tol * norm0):
            basis.append(v / np.linalg.norm(v))
            keep.append(i)
    drop = sorted(set(range(m)) - set(keep))
    if drop:
        coeffs, *_ = np.linalg.lstsq(vecs[keep].T, vecs[drop].T, rcond=None)
        implied = coeffs.T @ rhs[keep]
        bad = [
            drop[k]
            for k in range(len(drop))
            if abs(implied[k] - rhs[drop[k]]) > 1e-7 * max(1.0, np.abs(rhs).max())
        ]
        if bad:
            raise ValueError(
                f"constraints {bad} are linearly dependent but inconsistent with "
                "the rest; the system is contradictory"
            )
    return keep, drop


def _psd_sqrt_pair(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 1e-300, None)
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return root, inv_root


def _nt_scaling(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """W with W Z W = X (unique PSD scaling point)."""
    xs, _ = _psd_sqrt_pair(x)
    inner = xs @ z @ xs
    _, inner_isqrt = _psd_sqrt_pair(0.5 * (inner + inner.conj().T))
    w = xs @ inner_isqrt @ xs
    return 0.5 * (w + w.conj().T)


def _max_step(x: np.ndarray, dx: np.ndarray, fraction: float) -> float:
    """Largest alpha <= 1 with x + alpha dx still PSD (scaled by the step fraction)."""
    vals, vecs = np.linalg.eigh(x)
    floor = max(vals.max(), 1.0) * 1e-15
    inv_root = (vecs / np.sqrt(np.clip(vals, floor, None))) @ vecs.conj().T
    inner = inv_root @ dx @ inv_root
    lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)).min()
    if lam >= 0:
        return 1.0
    return min(1.0, fraction / (-lam))


def _refine_dual(
    c: np.ndarray,
    mats: list[np.ndarray],
    rhs: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Least-squares dual polish on the optimal face identified from x.

    Complementary slackness forces the dual slack to vanish on the range of the
    primal optimizer; re-solving y from those linear conditions removes the
    drift along near-flat dual rays (large multipliers on nearly dependent
    constraints) that weakens b.y.  The caller re-checks feasibility and keeps
    the better of the two duals.
    """
    vals, vecs = np.linalg.eigh(x)
    r_mask = vals > max(vals[-1], 1e-300) * 1e-7
    rank = int(np.sum(r_mask))
    if rank in (0, x.shape[0]):
        return y
    u_range = vecs[:, r_mask]

    def face_rows(mat: np.ndarray) -> np.ndarray:
        block = mat @ u_range  # n x r: both the range-range and kernel-range parts
        return np.concatenate((block.real.ravel(), block.imag.ravel()))

    a_cols = np.stack([face_rows(a) for a in mats], axis=1)
    target = face_rows(c)
    y_ref, *_ = np.linalg.lstsq(a_cols, target, rcond=None)
    return y_ref


def solve(problem: SDPProblem, via_embedding: bool = False) -> SDPSolution:
    """Solve the SDP; deterministic given the options.

    via_embedding runs the identical iteration on the real-symmetric embedding
    and maps the solution back (cross-check path).
    """
    if via_embedding:
        return _solve_embedded(problem)

    opts = problem.options
    mats = [0.5 * (a + a.conj().T) for a, _ in problem.constraints]
    rhs_full = np.array([float(b) for _, b in problem.constraints])
    # unit-norm constraints keep the Schur system well scaled; multipliers are
    # mapped back to the original normalization on return
    scales = np.array([max(np.linalg.norm(mat), 1e-300) for mat in mats])
    mats = [mat / s for mat, s in zip(mats, scales)]
    rhs_scaled = rhs_full / scales
    keep, drop = _prune_constraints(mats, rhs_scaled, opts.prune_tol)
    mats_kept = [mats[i] for i in keep]
    rhs = rhs_scaled[keep]

    x, y, z, status, gap_hist, iters = _ipm(
        problem.objective, mats_kept, rhs, opts
    )

    c = problem.objective

    def dual_quality(y_vec: np.ndarray) -> tuple[float, float, float]:
        slack = c - np.tensordot(y_vec, np.stack(mats_kept), axes=1)
        smin = float(np.linalg.eigvalsh(0.5 * (slack + slack.conj().T)).min())
        value = float(rhs @ y_vec)
        # with a unit-trace feasible set, slack negativity costs at most |smin|
        return value, smin, value - max(0.0, -smin)

    _, _, score = dual_quality(y)
    y_ref = _refine_dual(c, mats_kept, rhs, x, y)
    _, smin_ref, score_ref = dual_quality(y_ref)
    if smin_ref > -opts.feas_tol and score_ref > score:
        y = y_ref

    y_full = np.zeros(len(problem.constraints))
    y_full[keep] = y
    y_full /= scales
    primal = _inner(c, x)
    dual, slack_min, _ = dual_quality(y)
    residual = max(abs(_inner(a, x) - b) for a, b in zip(mats_kept, rhs))
    return SDPSolution(
        x=x,
        y=y_full,
        status=status,
        gap=abs(primal - dual),
        primal_objective=primal,
        dual_objective=dual,
        iterations=iters,
        gap_history=tuple(gap_hist),
        pruned_constraints=tuple(drop),
        dual_slack_min_eig=slack_min,
        max_residual=residual,
    )


def _ipm(
    c: np.ndarray,
    mats: list[np.ndarray],
    rhs: np.ndarray,
    opts: SDPOptions,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, str, list[float], int]:
    n = c.shape[0]
    m = len(mats)
    dtype = complex
    a_tensor = np.stack(mats).astype(dtype)
    a_rows = a_tensor.reshape(m, n * n)  # Tr[A_k T] = a_rows @ T.T.ravel()
    c = c.astype(dtype)

    def pairings(t: np.ndarray) -> np.ndarray:
        return (a_rows @ t.T.ravel()).real

    x = np.eye(n, dtype=dtype)
    z = np.eye(n, dtype=dtype) * max(1.0, float(np.linalg.norm(c, 2)))
    y = np.zeros(m)

    b_norm = 1.0 + np.linalg.norm(rhs)
    c_norm = 1.0 + np.linalg.norm(c)
    gap_hist: list[float] = []
    status = "max-iterations"
    it = 0
    best = None
    best_merit = math.inf
    obj_gap_stall = 0
    prev_obj_gap = math.inf
    for it in range(1, opts.max_iterations + 1):
        rp = rhs - pairings(x)
        rd = c - z - np.tensordot(y, a_tensor, axes=1)
        mu = _inner(x, z) / n
        gap_hist.append(_inner(x, z))

        rel_p = np.linalg.norm(rp) / b_norm
        rel_d = np.linalg.norm(rd) / c_norm
        scale = 1.0 + abs(_inner(c, x)) + abs(rhs @ y)
        rel_gap = _inner(x, z) / scale
        # the objective gap includes the y . residual coupling that pure
        # complementarity misses when multipliers are large
        rel_obj_gap = abs(_inner(c, x) - rhs @ y) / scale
        core_ok = (
            rel_p < opts.feas_tol and rel_d < opts.feas_tol and rel_gap < opts.gap_tol
        )
        merit = max(rel_p, rel_d, rel_gap, 0.01 * rel_obj_gap)
        if merit < best_merit:
            best_merit = merit
            best = (x, y, z)
        if core_ok:
            if rel_obj_gap < 100 * opts.gap_tol:
                status = "optimal"
                break
            # duality-gap stall on a degenerate face: the dual polish after the
            # loop recovers b.y, so accept once progress stops
            obj_gap_stall = obj_gap_stall + 1 if rel_obj_gap > 0.9 * prev_obj_gap else 0
            prev_obj_gap = min(prev_obj_gap, rel_obj_gap)
            if obj_gap_stall >= 10:
                status = "optimal"
                break

        w = _nt_scaling(x, z)
        z_vals, z_vecs = np.linalg.eigh(z)
        z_inv = (z_vecs / np.clip(z_vals, 1e-300, None)) @ z_vecs.conj().T

        waw = np.matmul(np.matmul(w[None, :, :], a_tensor), w[None, :, :])
        schur = (a_rows @ waw.transpose(0, 2, 1).reshape(m, n * n).T).real
        schur = 0.5 * (schur + schur.T)
        try:
            cho = la.cho_factor(schur + 1e-14 * np.trace(schur) * np.eye(m))

            def solve_schur(v, _cho=cho):
                sol = la.cho_solve(_cho, v)
                # one refinement pass recovers digits lost to ill conditioning
                sol += la.cho_solve(_cho, v - schur @ sol)
                return sol

        except la.LinAlgError:
            solve_schur = lambda v: np.linalg.lstsq(schur, v, rcond=None)[0]  # noqa: E731

        w_rd_w = w @ rd @ w

        def direction(sigma_mu: float):
            rc = sigma_mu * z_inv - x
            rhs_vec = rp - pairings(rc - w_rd_w)
            dy = solve_schur(rhs_vec)
            dz = rd - np.tensordot(dy, a_tensor, axes=1)
            dx = rc - w_rd_w + np.tensordot(dy, waw, axes=1)
            dx = 0.5 * (dx + dx.conj().T)
            dz = 0.5 * (dz + dz.conj().T)
            return dx, dy, dz

        infeasible = rel_p > opts.feas_tol or rel_d > opts.feas_tol

        # predictor
        dx, dy, dz = direction(0.0)
        ap = _max_step(x, dx, opts.step_fraction)
        ad = _max_step(z, dz, opts.step_fraction)
        mu_aff = _inner(x + ap * dx, z + ad * dz) / n
        sigma = min(0.99, max(1e-6, (max(mu_aff, 0.0) / mu) ** 3))
        if infeasible:
            # stay close to the central path while residuals dominate, so the
            # complementarity never outruns feasibility (which would stall steps)
            sigma = max(sigma, 0.5)
        # corrector (same scaling and factorization)
        dx, dy, dz = direction(sigma * mu)
        ap = _max_step(x, dx, opts.step_fraction)
        ad = _max_step(z, dz, opts.step_fraction)
        if infeasible:
            # equal steps shrink the (linear) residuals by exactly (1 - alpha),
            # strictly faster than the centered complementarity
            ap = ad = min(ap, ad)
        elif _inner(x + ap * dx, z + ad * dz) > gap_hist[-1] * (1.0 + 1e-9):
            # keep complementarity nonincreasing once feasibility is met: with
            # equal steps the gap is quadratic in alpha with negative slope
            # n mu (sigma - 1), so a guaranteed-descent step length exists
            lin = _inner(dx, z) + _inner(x, dz)
            cross = _inner(dx, dz)
            a_eq = min(ap, ad)
            if cross > 0 and lin < 0:
                a_eq = min(a_eq, 0.9 * (-lin) / cross)
            ap = ad = max(a_eq, 0.0)

        x = x + ap * dx
        y = y + ad * dy
        z = z + ad * dz
        x = 0.5 * (x + x.conj().T)
        z = 0.5 * (z + z.conj().T)

        if np.linalg.norm(y) > 1e12 and rel_p > 1e-4:
            status = "infeasible"
            break
        if not (np.isfinite(mu) and np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            break  # numerical blow-up past the useful regime; best iterate stands

    if best is not None and status != "optimal":
        x, y, z = best
    return x, y, z, status, gap_hist, it


@dataclass(frozen=True)
class EmbeddedProblem:
    problem: SDPProblem

    @staticmethod
    def embed_matrix(mat: np.ndarray) -> np.ndarray:
        re, im = mat.real, mat.imag
        return np.block([[re, -im], [im, re]])

    @staticmethod
    def extract(y_mat: np.ndarray) -> np.ndarray:
        n = y_mat.shape[0] // 2
        jj = np.block(
            [[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]]
        )
        sym = 0.5 * (y_mat + jj @ y_mat @ jj.T)
        return sym[:n, :n] + 1j * sym[n:, :n]


def embed_hermitian(problem: SDPProblem) -> EmbeddedProblem:
    """Real-symmetric embedding with objective and constraint values preserved.

    phi(M) = [[Re M, -Im M], [Im M, Re M]] satisfies Tr[phi(A) phi(X)] = 2 Tr[A X]
    for Hermitian A, X, so objective and constraint matrices carry a factor 1/2.
    """
    half = 0.5
    embedded = SDPProblem(
        objective=half * EmbeddedProblem.embed_matrix(problem.objective),
        constraints=[
            (half * EmbeddedProblem.embed_matrix(a), b)
            for a, b in problem.constraints
        ],
        options=problem.options,
    )
    return EmbeddedProblem(problem=embedded)


def _solve_embedded(problem: SDPProblem) -> SDPSolution:
    emb = embed_hermitian(problem)
    sol = solve(emb.problem, via_embedding=False)
    x = EmbeddedProblem.extract(sol.x)
    return SDPSolution(
        x=x,
        y=sol.y,
        status=sol.status,
        gap=sol.gap,
        primal_objective=sol.primal_objective,
        dual_objective=sol.dual_objective,
        iterations=sol.iterations,
        gap_history=sol.gap_history,
        pruned_constraints=sol.pruned_constraints,
        dual_slack_min_eig=sol.dual_slack_min_eig,
        max_residual=sol.max_residual,
    )


def dump_problem(problem: SDPProblem) -> str:
    """Plain-text debug format: dimension header, then row-major complex entries."""
    lines = [f"dim {problem.dim} constraints {len(problem.constraints)}"]

    def emit(mat: np.ndarray):
        for row in mat:
            lines.append(" ".join(f"{v.real:.17e} {v.imag:.17e}" for v in row))

    lines.append("objective")
    emit(problem.objective.astype(complex))
    for i, (a, b) in enumerate(problem.constraints):
        lines.append(f"constraint {i} rhs {b:.17e}")
        emit(a.astype(complex))
    return "\n".join(lines) + "\n"


def load_problem(text: str, options: SDPOptions | None = None) -> SDPProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    dim, m = int(header[1]), int(header[3])

    def read_matrix(start: int) -> tuple[np.ndarray, int]:
        mat = np.zeros((dim, dim), dtype=complex)
        for r in range(dim):
            vals = [float(v) for v in lines[start + r].split()]
            mat[r] = [complex(vals[2 * k], vals[2 * k + 1]) for k in range(dim)]
        return mat, start + dim

    pos = 1
    assert lines[pos] == "objective"
    objective, pos = read_matrix(pos + 1)
    constraints = []
    for _ in range(m):
        rhs = float(lines[pos].split()[-1])
        mat, pos = read_matrix(pos + 1)
        constraints.append((mat, rhs))
    return SDPProblem(
        objective=objective,
        constraints=constraints,
        options=options or SDPOptions(),
    )
