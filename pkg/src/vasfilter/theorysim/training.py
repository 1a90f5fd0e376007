"""Closed-form training of the linear contrastive model and its evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    DegenerateClasses,
    DegenerateSpectrum,
    EmptyTest,
    ShapeMismatch,
    SubsetTooSmall,
)
from .model import SynthWorld, derive_seed

TIE_TOL = 1e-12

# gradient-descent oracle settings (versioned so stored expectations stay valid)
GD_VERSION = 1
GD_STEP = 0.1
GD_MAX_ITERS = 10_000
GD_REL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TrainedMap:
    product: np.ndarray
    rho: float
    subset_size: int
    rank: int

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.product, compute_uv=False)

    def numerical_rank(self, rel: float = 1e-8) -> int:
        s = self.singular_values()
        return int(np.sum(s > rel * s[0])) if s.size and s[0] > 0 else 0

    @classmethod
    def zero(cls, d: int, rho: float = 1.0, rank: int = 0) -> "TrainedMap":
        return cls(np.zeros((d, d)), rho, 0, rank)


def gamma_matrix(x_v: np.ndarray, x_l: np.ndarray) -> np.ndarray:
    """``(1/(m-1)) sum x_v x_l^T - (m/(m-1)) mean(x_v) mean(x_l)^T``."""
    m = x_v.shape[0]
    if m < 2:
        raise SubsetTooSmall(f"need at least 2 samples, got {m}")
    mean_v, mean_l = x_v.mean(axis=0), x_l.mean(axis=0)
    return (x_v.T @ x_l) / (m - 1) - (m / (m - 1)) * np.outer(mean_v, mean_l)


def truncated_svd(a: np.ndarray, r: int) -> np.ndarray:
    """Best rank-``r`` approximation; refuses when the r-th singular value is tied."""
    u, s, vt = np.linalg.svd(a)
    if r < s.size and s[0] > 0:
        gap_tied = s[r - 1] - s[r] <= TIE_TOL * s[0]
        if gap_tied and s[r - 1] > TIE_TOL * s[0]:
            raise DegenerateSpectrum(
                f"singular values {r} and {r + 1} tie at {s[r - 1]:.6g}; rank-{r} truncation is not unique"
            )
    r = min(r, s.size)
    return (u[:, :r] * s[:r]) @ vt[:r]


def closed_form_product(x_v: np.ndarray, x_l: np.ndarray, r: int, rho: float) -> np.ndarray:
    m = x_v.shape[0]
    gamma = gamma_matrix(x_v, x_l)
    return ((m - 1) / (m * rho)) * truncated_svd(gamma, r)


def closed_form_train(world: SynthWorld, subset, rho: float | None = None) -> TrainedMap:
    """Minimizer of the regularized linear contrastive loss on ``subset``.

    The product ``G_v G_l^T`` equals ``(1/rho) ((m-1)/m) SVD_r(Gamma)``.
    """
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size < 2:
        raise SubsetTooSmall(f"need |S| >= 2, got {idx.size}")
    rho = world.config.rho if rho is None else float(rho)
    if not rho > 0:
        raise ValueError("rho must be > 0")
    product = closed_form_product(world.x_v[idx], world.x_l[idx], world.r, rho)
    return TrainedMap(product, rho, int(idx.size), world.r)


# -- direct loss and gradient-descent oracle -----------------------------------

def regularized_loss(g_v: np.ndarray, g_l: np.ndarray, x_v: np.ndarray, x_l: np.ndarray,
                     rho: float) -> float:
    """Training loss evaluated from the pairwise similarity matrix ``s_ij``."""
    m = x_v.shape[0]
    s = (x_v @ g_v) @ (x_l @ g_l).T
    gap = (s.sum() - m * np.trace(s)) / (m * (m - 1))
    return float(gap + 0.5 * rho * m / (m - 1) * np.sum((g_v @ g_l.T) ** 2))


def product_loss(product: np.ndarray, x_v: np.ndarray, x_l: np.ndarray, rho: float) -> float:
    """Same loss written in terms of ``P = G_v G_l^T`` (any factorization)."""
    m = x_v.shape[0]
    s = x_v @ product @ x_l.T
    gap = (s.sum() - m * np.trace(s)) / (m * (m - 1))
    return float(gap + 0.5 * rho * m / (m - 1) * np.sum(product**2))


@dataclass(frozen=True, eq=False)
class GDResult:
    g_v: np.ndarray
    g_l: np.ndarray
    loss: float
    iterations: int
    converged: bool

    @property
    def product(self) -> np.ndarray:
        return self.g_v @ self.g_l.T


def gradient_descent_oracle(x_v: np.ndarray, x_l: np.ndarray, r: int, rho: float, *,
                            seed: int = 0, max_iters: int = GD_MAX_ITERS,
                            rel_tol: float = GD_REL_TOL) -> GDResult:
    """Plain gradient descent on the factored loss from a small random start.

    The gradient comes from the pair-sum form of the loss, not from the
    closed-form's Gamma. Step size is ``GD_STEP / sigma_max^2`` where
    ``sigma_max^2`` is the top singular value of the pair-sum coupling matrix.
    """
    m, d = x_v.shape
    ones = np.ones(m)
    # d/dG_v of sum_ij s_ij - m sum_i s_ii, divided by m(m-1)
    coupling = (np.outer(x_v.T @ ones, x_l.T @ ones) - m * (x_v.T @ x_l)) / (m * (m - 1))
    c = rho * m / (m - 1)
    sigma_sq = float(np.linalg.norm(coupling, 2))
    if sigma_sq == 0:
        return GDResult(np.zeros((d, r)), np.zeros((d, r)), 0.0, 0, True)
    step = GD_STEP / sigma_sq
    rng = np.random.default_rng(seed)
    scale = 1e-3 * np.sqrt(sigma_sq / c)
    g_v = scale * rng.standard_normal((d, r))
    g_l = scale * rng.standard_normal((d, r))

    def loss_of(gv, gl):
        p = gv @ gl.T
        return float(np.sum(coupling * p) + 0.5 * c * np.sum(p * p))

    prev = loss_of(g_v, g_l)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        p = g_v @ g_l.T
        grad_p = coupling + c * p
        g_v, g_l = g_v - step * grad_p @ g_l, g_l - step * grad_p.T @ g_v
        cur = loss_of(g_v, g_l)
        if it > 50 and abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            converged = True
            break
        prev = cur
    return GDResult(g_v, g_l, regularized_loss(g_v, g_l, x_v, x_l, rho), it, converged)


# -- test metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class TestLoss:
    """Both estimates of the test loss.

    ``contrast`` pairs each test image with an independently drawn text;
    ``simplified`` is ``-(1/n) sum x_v^T P x_l``. ``scale`` is the RMS of
    the per-sample cross term, so the two should agree within a few
    ``scale / sqrt(n)``.
    """

    __test__ = False

    contrast: float
    simplified: float
    scale: float
    n: int


def test_loss(trained: TrainedMap, world: SynthWorld, *, seed: int | None = None) -> TestLoss:
    x_v, x_l = world.x_v_test, world.x_l_test
    n = x_v.shape[0]
    if n == 0:
        raise EmptyTest("world has no test samples")
    p = trained.product
    paired = np.einsum("ij,ij->i", x_v @ p, x_l)
    simplified = -float(paired.mean())
    rng = np.random.default_rng(derive_seed(world.config.seed if seed is None else seed, 0x7E57))
    _, _, _, x_l2 = world.sample_test(n, rng)
    cross = np.einsum("ij,ij->i", x_v @ p, x_l2)
    contrast = float(np.mean(cross - paired))
    scale = float(np.sqrt(np.mean(cross**2)))
    return TestLoss(contrast, simplified, scale, n)


test_loss.__test__ = False


def simplified_test_loss(product: np.ndarray, x_v: np.ndarray, x_l: np.ndarray) -> float:
    return -float(np.einsum("ij,ij->i", x_v @ product, x_l).mean())


@dataclass(frozen=True, eq=False)
class ClassSpec:
    """Latent class templates (one row per class) and a class label per test sample."""

    templates: np.ndarray
    labels: np.ndarray


def axis_classes(world: SynthWorld) -> ClassSpec:
    """Classes ``+e_j`` / ``-e_j`` per latent axis; each test sample joins its closest."""
    r = world.r
    templates = np.vstack([np.eye(r), -np.eye(r)])
    labels = np.argmax(world.z_v_test @ templates.T, axis=1)
    return ClassSpec(templates, labels)


def classification_accuracy(trained: TrainedMap, world: SynthWorld, classes: ClassSpec, *,
                            trials: int = 10_000, seed: int | None = None) -> float:
    """Monte-Carlo probability that a sample scores its own class template above
    another class's; ties count one half."""
    templates = np.asarray(classes.templates, dtype=np.float64)
    labels = np.asarray(classes.labels)
    n_classes = templates.shape[0]
    if n_classes < 2:
        raise DegenerateClasses("need at least two classes")
    if labels.shape[0] != world.x_v_test.shape[0]:
        raise ShapeMismatch("one label per test sample required")
    if templates.shape[1] != world.r:
        raise ShapeMismatch(f"templates need {world.r} latent coordinates")
    members = [np.flatnonzero(labels == c) for c in range(n_classes)]
    populated = [c for c in range(n_classes) if members[c].size]
    if len(populated) < 2:
        raise DegenerateClasses("fewer than two classes have test samples")
    rng = np.random.default_rng(derive_seed(world.config.seed if seed is None else seed, 0xACC))
    text_templates = templates @ world.g_star_l.T
    sims = world.x_v_test @ trained.product @ text_templates.T
    pop = np.array(populated)
    c = pop[rng.integers(0, pop.size, trials)]
    c_other = rng.integers(0, n_classes - 1, trials)
    c_other = c_other + (c_other >= c)
    pick = rng.random(trials)
    sizes = np.array([members[k].size for k in range(n_classes)])
    offsets = np.floor(pick * sizes[c]).astype(np.int64)
    i = np.array([members[cc][o] for cc, o in zip(c, offsets)])
    own, other = sims[i, c], sims[i, c_other]
    wins = (own > other) + 0.5 * (own == other)
    return float(wins.mean())


# -- noise decomposition ----------------------------------------------------------

def p_terms(world: SynthWorld, subset) -> list[np.ndarray]:
    """``[P0, P1, P2, P3, P4]`` with ``Gamma = P0 + ... + P4`` on ``subset``.

    ``P0`` carries the latent signal; the rest involve the noise or the
    sample means.
    """
    idx = np.asarray(subset, dtype=np.int64)
    m = idx.size
    if m < 2:
        raise SubsetTooSmall(f"need |S| >= 2, got {m}")
    z_v, z_l = world.z_v[idx], world.z_l[idx]
    xi_v, xi_l = world.xi_v[idx], world.xi_l[idx]
    gv, gl = world.g_star_v, world.g_star_l
    sigma_s = z_v.T @ z_l / m
    p0 = (m / (m - 1)) * gv @ sigma_s @ gl.T
    p1 = gv @ (z_v.T @ xi_l) / (m - 1)
    p2 = (xi_v.T @ z_l) @ gl.T / (m - 1)
    p3 = xi_v.T @ xi_l / (m - 1)
    mean_v, mean_l = world.x_v[idx].mean(axis=0), world.x_l[idx].mean(axis=0)
    p4 = -(m / (m - 1)) * np.outer(mean_v, mean_l)
    return [p0, p1, p2, p3, p4]


def nuclear_norm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False).sum())
