"""Greedy A-/V-optimal design and seeded random baselines.

Both design selectors run backward elimination on the same round schedule
as VAS-D. Each round scores every remaining row by how much removing it
would raise the design objective, drops the cheapest ones, and keeps
``(sum_S f f^T + lam I)^{-1}`` current with Sherman-Morrison downdates.
"""

from __future__ import annotations

import numpy as np

from .embstore import EmbeddingMatrix
from .errors import (
    DimMismatch,
    EmptySelection,
    SingularDowndate,
    TargetExceedsInput,
    ValidationError,
)
from .scoring import MomentMatrix, map_chunks
from .selection import (
    DEFAULT_TAU,
    RECOMPUTE_EVERY,
    SelectionResult,
    StageRecord,
    greedy_schedule,
)

SINGULAR_TOL = 1e-10
RIDGE_SCALE = 1e-6
RNG_NAME = "philox4x64-fisher-yates-v1"


class RidgeInverse:
    """Inverse of ``sum_S f f^T + lam I`` under rank-1 downdates."""

    def __init__(self, rows: np.ndarray, lam: float):
        rows = np.asarray(rows, dtype=np.float64)
        if lam < 0:
            raise ValidationError("ridge must be >= 0")
        self.d = rows.shape[1]
        self.lam = float(lam)
        self.count = rows.shape[0]
        if self.count < self.d and self.lam <= 0:
            raise ValidationError("ridge must be > 0 when fewer rows than dimensions")
        self.matrix = rows.T @ rows + self.lam * np.eye(self.d)
        self.inv = np.linalg.inv(self.matrix)

    def downdate(self, f: np.ndarray) -> None:
        f = np.asarray(f, dtype=np.float64)
        u = self.inv @ f
        denom = 1.0 - f @ u
        if abs(denom) < SINGULAR_TOL:
            raise SingularDowndate(f"downdate denominator {denom:.3g}")
        self.inv += np.outer(u, u) / denom
        self.inv = 0.5 * (self.inv + self.inv.T)
        self.matrix -= np.outer(f, f)
        self.count -= 1

    def refresh(self) -> None:
        self.inv = np.linalg.inv(self.matrix)

    def residual(self) -> float:
        """Relative Frobenius error of ``inv @ matrix`` against the identity."""
        eye = np.eye(self.d)
        return float(np.linalg.norm(self.inv @ self.matrix - eye) / np.linalg.norm(eye))

    def drift(self) -> float:
        """Relative Frobenius distance to a fresh explicit inverse."""
        exact = np.linalg.inv(self.matrix)
        return float(np.linalg.norm(self.inv - exact) / np.linalg.norm(exact))


def default_ridge(rows: np.ndarray) -> float:
    rows = np.asarray(rows, dtype=np.float64)
    return RIDGE_SCALE * float(np.mean(np.einsum("ij,ij->i", rows, rows)))


def removal_costs(F: np.ndarray, inv: np.ndarray, prior: np.ndarray | None = None,
                  workers: int = 1) -> np.ndarray:
    """Increase of ``Tr(P inv)`` when each row of ``F`` is removed (``P = I`` if None).

    Rows whose downdate would be singular get ``inf``.
    """
    out = np.empty(F.shape[0])

    def work(s, e):
        U = F[s:e] @ inv
        denom = 1.0 - np.einsum("ij,ij->i", U, F[s:e])
        if prior is None:
            num = np.einsum("ij,ij->i", U, U)
        else:
            num = np.einsum("ij,ij->i", U @ prior, U)
        with np.errstate(divide="ignore", invalid="ignore"):
            cost = num / denom
        cost[np.abs(denom) < SINGULAR_TOL] = np.inf
        out[s:e] = cost

    map_chunks(work, F.shape[0], workers)
    return out


def _objective(inv: np.ndarray, prior: np.ndarray | None) -> float:
    return float(np.trace(inv) if prior is None else np.sum(prior * inv.T))


def _design_select(vision, input_set, target_n, tau, lam, prior, name, recompute_every, workers):
    X = vision.data if isinstance(vision, EmbeddingMatrix) else np.asarray(vision)
    current = np.asarray(input_set.kept, dtype=np.int64)
    n0 = int(current.size)
    if n0 == 0:
        raise EmptySelection(f"{name} input set is empty")
    if not 1 <= target_n <= n0:
        raise TargetExceedsInput(f"target {target_n} vs input size {n0}")
    F = np.asarray(X[current], dtype=np.float64)
    if prior is not None and prior.shape != (F.shape[1], F.shape[1]):
        raise DimMismatch(f"prior {prior.shape} vs d={F.shape[1]}")
    if lam is None:
        lam = default_ridge(F)
    if not lam > 0:
        raise ValidationError("lambda must be > 0")
    ridge = RidgeInverse(F, lam)
    rounds = []
    for t, n_t in enumerate(greedy_schedule(n0, target_n, tau), start=1):
        costs = removal_costs(F, ridge.inv, prior, workers)
        # keep the rows whose removal would hurt most; ties keep the lower index
        keep_pos = np.sort(np.argsort(-costs, kind="stable")[:n_t])
        drop = np.ones(F.shape[0], dtype=bool)
        drop[keep_pos] = False
        for f in F[drop]:
            ridge.downdate(f)
        F = F[keep_pos]
        current = current[keep_pos]
        if recompute_every and t % recompute_every == 0:
            ridge.refresh()
        rounds.append({"t": t, "N_t": n_t, "removed": int(drop.sum()),
                       "objective": _objective(ridge.inv, prior)})
    obj = _objective(ridge.inv, prior)
    stage = StageRecord(name, n0, target_n, objective_value=obj)
    meta = {"lambda": lam, "scale": "sum", "tau": tau, "rounds": rounds}
    return SelectionResult(current, input_set.stages + [stage], target_n=target_n, meta=meta)


def a_optimal_select(vision, input_set: SelectionResult, target_n: int, tau: int = DEFAULT_TAU,
                     lam: float | None = None, *, recompute_every: int = RECOMPUTE_EVERY,
                     workers: int = 1) -> SelectionResult:
    """Greedy backward elimination for ``min Tr((sum_S f f^T + lam I)^{-1})``."""
    return _design_select(vision, input_set, target_n, tau, lam, None, "a_optimal",
                          recompute_every, workers)


def v_optimal_select(vision, input_set: SelectionResult, target_n: int, tau: int = DEFAULT_TAU,
                     lam: float | None = None, prior: MomentMatrix | np.ndarray | None = None, *,
                     recompute_every: int = RECOMPUTE_EVERY, workers: int = 1) -> SelectionResult:
    """As :func:`a_optimal_select` with objective ``Tr(prior (sum_S f f^T + lam I)^{-1})``."""
    if prior is None:
        raise ValidationError("V-optimal selection needs a prior moment")
    P = prior.entries if isinstance(prior, MomentMatrix) else np.asarray(prior, dtype=np.float64)
    return _design_select(vision, input_set, target_n, tau, lam, P, "v_optimal",
                          recompute_every, workers)


def _bounded(bitgen: np.random.Philox, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` from raw 64-bit draws, by rejection."""
    limit = (2**64 // bound) * bound
    while True:
        x = int(bitgen.random_raw())
        if x < limit:
            return x % bound


def random_select(n: int, target_n: int, seed: int) -> SelectionResult:
    """Uniform ``target_n``-subset of ``range(n)`` without replacement.

    Uses a partial Fisher-Yates shuffle driven by raw Philox-4x64 output, so
    the same seed gives the same subset on every platform and numpy version.
    """
    if not 1 <= target_n <= n:
        raise TargetExceedsInput(f"target {target_n} vs n={n}")
    bitgen = np.random.Philox(seed)
    perm = np.arange(n, dtype=np.int64)
    for i in range(target_n):
        j = i + _bounded(bitgen, n - i)
        perm[i], perm[j] = perm[j], perm[i]
    kept = np.sort(perm[:target_n])
    stage = StageRecord("random", n, target_n)
    return SelectionResult(kept, [stage], target_n=target_n, meta={"rng": RNG_NAME, "seed": seed})


__all__ = [
    "RNG_NAME",
    "RidgeInverse",
    "a_optimal_select",
    "default_ridge",
    "random_select",
    "removal_costs",
    "v_optimal_select",
]
