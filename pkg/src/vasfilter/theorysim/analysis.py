"""Hindsight-best subsets, teacher error, zero-noise identity and bound checks and strategy comparisons.

All moments here are empirical, so zero-noise checks are exact algebra
rather than statistics.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import CombinatorialBlowup, DegenerateSpectrum, ShapeMismatch, ValidationError
from ..optdesign import a_optimal_select, random_select, v_optimal_select
from ..scoring import MomentMatrix, vas_scores
from ..selection import SelectionResult, _top_k_positions, vas_d
from .model import SynthConfig, SynthWorld, derive_seed, gen_world
from .training import (
    axis_classes,
    classification_accuracy,
    closed_form_train,
    nuclear_norm,
    simplified_test_loss,
    test_loss,
)

log = logging.getLogger(__name__)

MAX_COMBINATIONS = 1_000_000
ENUM_CHUNK = 65_536
ENVELOPE_FACTOR = 3.0
CALIBRATION_SEEDS = 20
WORST_CASE_SAMPLES = 1000
MAX_RESAMPLES = 10

STRATEGIES = ("random", "vas_prior", "vas_d", "a_opt", "v_opt", "clip_top")

_CALIBRATION_STREAM = 0xCA11B
_PROXY_KEY = 1
_RANDOM_KEY = 2
_EVAL_KEY = 3


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def frob(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius inner product ``sum_ij a_ij b_ij``."""
    return float(np.sum(np.asarray(a) * np.asarray(b)))


def _sigma(m) -> np.ndarray:
    return m.entries if isinstance(m, MomentMatrix) else np.asarray(m, dtype=np.float64)


# -- subset moments and the hindsight best ------------------------------------

def subset_cross_moment(z_v: np.ndarray, z_l: np.ndarray, subset=None,
                        centered: bool = False) -> np.ndarray:
    """``(1/|S|) sum z_v z_l^T`` over ``subset``; minus the outer product of means if centered."""
    if subset is not None:
        idx = np.asarray(subset, dtype=np.int64)
        z_v, z_l = z_v[idx], z_l[idx]
    m = z_v.shape[0]
    if m == 0:
        raise ValidationError("empty subset")
    out = z_v.T @ z_l / m
    if centered:
        out = out - np.outer(z_v.mean(axis=0), z_l.mean(axis=0))
    return out


def subset_objective(world: SynthWorld, subset, sigma_test, centered: bool = False) -> float:
    return frob(_sigma(sigma_test), subset_cross_moment(world.z_v, world.z_l, subset, centered))


def best_subset_oracle(world: SynthWorld, pool, k: int, sigma_test, *,
                       centered: bool = False) -> tuple[np.ndarray, float]:
    """Exhaustive search for the ``k``-subset of ``pool`` maximizing ``<sigma_test, Sigma_S>``.

    ``Sigma_S`` is the latent cross-moment of the subset (mean-removed when
    ``centered``). Ties go to the lexicographically first subset.
    """
    pool = np.asarray(pool, dtype=np.int64)
    n = pool.size
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    total = math.comb(n, k)
    if total > MAX_COMBINATIONS:
        raise CombinatorialBlowup(f"C({n}, {k}) = {total} > {MAX_COMBINATIONS}")
    T = _sigma(sigma_test)
    zv, zl = world.z_v[pool], world.z_l[pool]
    # pairwise terms B_ij = z_v_i^T T z_l_j; the uncentered objective only needs the diagonal
    B = zv @ T @ zl.T
    diag = np.diag(B).copy()
    best_val, best_combo = -np.inf, None
    combos = itertools.combinations(range(n), k)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, ENUM_CHUNK)),
                            dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(-1, k)
        vals = diag[block].sum(axis=1) / k
        if centered:
            vals = vals - B[block[:, :, None], block[:, None, :]].sum(axis=(1, 2)) / (k * k)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_combo = float(vals[j]), block[j].copy()
    chosen = np.sort(pool[best_combo])
    return chosen, subset_objective(world, chosen, T, centered)


def best_subset_additive(world: SynthWorld, pool, k: int, sigma_test) -> tuple[np.ndarray, float]:
    """Uncentered best subset via top-k of per-sample ``z_v^T T z_l`` (exact for that objective)."""
    pool = np.asarray(pool, dtype=np.int64)
    T = _sigma(sigma_test)
    per = np.einsum("ij,ij->i", world.z_v[pool] @ T, world.z_l[pool])
    chosen = np.sort(pool[_top_k_positions(per, k)])
    return chosen, subset_objective(world, chosen, T)


# -- teacher error ---------------------------------------------------------------

@dataclass(frozen=True)
class TeacherErrorReport:
    """Nuclear-norm gaps between teacher-recovered and true latent moments on a subset.

    When ``sampled > 0`` the ``worst_*`` fields hold the maximum over that
    many random subsets of the same size; that is a sampled stand-in for the
    worst case over all subsets, so ``approximate`` is set.
    """

    eps_v: float
    eps_l: float
    eps_cross: float
    worst_v: float = float("nan")
    worst_l: float = float("nan")
    worst_cross: float = float("nan")
    sampled: int = 0

    @property
    def approximate(self) -> bool:
        return self.sampled > 0


def _teacher_gaps(f_v, f_l, z_v, z_l) -> tuple[float, float, float]:
    m = z_v.shape[0]
    ev = nuclear_norm(f_v.T @ f_v - z_v.T @ z_v) / m
    el = nuclear_norm(f_l.T @ f_l - z_l.T @ z_l) / m
    ec = nuclear_norm(f_v.T @ f_l - z_v.T @ z_l) / m
    return ev, el, ec


def measure_teacher_error(world: SynthWorld, teacher_v: np.ndarray, teacher_l: np.ndarray,
                          subset, *, sampled: int = 0, seed: int = 0) -> TeacherErrorReport:
    """Teacher maps are ``d x r``; the recovered latent of ``x`` is ``x @ teacher``."""
    teacher_v = np.asarray(teacher_v, dtype=np.float64)
    teacher_l = np.asarray(teacher_l, dtype=np.float64)
    want = (world.d, world.r)
    if teacher_v.shape != want or teacher_l.shape != want:
        raise ShapeMismatch(f"teacher maps must be {want}, got {teacher_v.shape} and {teacher_l.shape}")
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("empty subset")
    f_v, f_l = world.x_v @ teacher_v, world.x_l @ teacher_l
    ev, el, ec = _teacher_gaps(f_v[idx], f_l[idx], world.z_v[idx], world.z_l[idx])
    if sampled <= 0:
        return TeacherErrorReport(ev, el, ec)
    worst = np.array([ev, el, ec])
    rng = np.random.default_rng(seed)
    n = world.x_v.shape[0]
    for _ in range(sampled):
        s = rng.choice(n, size=idx.size, replace=False)
        worst = np.maximum(worst, _teacher_gaps(f_v[s], f_l[s], world.z_v[s], world.z_l[s]))
    return TeacherErrorReport(ev, el, ec, *map(float, worst), sampled=sampled)


# -- noise envelope ----------------------------------------------------------------

def noise_shape(d: int, m: int, n_best: int, noise_std: float) -> float:
    """Shape of the noise term: ``s(1+s) (sqrt(d log(d m)/m) + sqrt(d log(d n_best)/n_best))``."""
    def part(k):
        return math.sqrt(d * math.log(max(d * k, 2)) / k)

    return noise_std * (1.0 + noise_std) * (part(m) + part(n_best))


def trained_loss(world: SynthWorld, subset) -> float:
    return simplified_test_loss(closed_form_train(world, subset).product,
                                world.x_v_test, world.x_l_test)


def noise_residual(world: SynthWorld, subset, best, sigma_test=None) -> tuple[float, float]:
    """``(rho * Delta, <T, Sigma^c_best - Sigma^c_S>)`` with ``T`` the empirical latent test moment.

    The two agree exactly at zero noise; their gap is what the noise term covers.
    """
    T = world.test_cross_moment() if sigma_test is None else _sigma(sigma_test)
    rho = world.config.rho
    rho_delta = rho * (trained_loss(world, subset) - trained_loss(world, best))
    vas_term = (subset_objective(world, best, T, centered=True)
                - subset_objective(world, subset, T, centered=True))
    return rho_delta, vas_term


def _world_for(cfg: SynthConfig, *keys: int, resamples: list | None = None) -> SynthWorld:
    """World seeded by ``derive_seed(cfg.seed, *keys, attempt)``; retries on a tied spectrum."""
    for attempt in range(MAX_RESAMPLES):
        world = gen_world(cfg.with_seed(derive_seed(cfg.seed, *keys, attempt)))
        try:
            closed_form_train(world, np.arange(world.x_v.shape[0]))
        except DegenerateSpectrum as exc:
            log.warning("resampling world %s (attempt %d): %s", keys, attempt, exc)
            if resamples is not None:
                resamples.append({"keys": list(keys), "attempt": attempt, "reason": str(exc)})
            continue
        return world
    raise DegenerateSpectrum(f"no non-degenerate world after {MAX_RESAMPLES} attempts")


def _train_checked(world: SynthWorld, subsets) -> bool:
    try:
        for s in subsets:
            closed_form_train(world, s)
    except DegenerateSpectrum:
        return False
    return True


# -- subset strategies --------------------------------------------------------------

def teacher_embeddings(world: SynthWorld, x_v=None, x_l=None):
    x_v = world.x_v if x_v is None else x_v
    x_l = world.x_l if x_l is None else x_l
    return x_v @ world.g_star_v, x_l @ world.g_star_l


def proxy_prior(world: SynthWorld, seed: int, n: int | None = None,
                mode: str = "vision_only") -> MomentMatrix:
    """Prior moment from an independent draw of the test distribution, in teacher space."""
    n = n or max(world.config.n_test, 1000)
    rng = np.random.default_rng(seed)
    _, _, x_v, x_l = world.sample_test(n, rng)
    f_v, f_l = teacher_embeddings(world, x_v, x_l)
    right = f_v if mode == "vision_only" else f_l
    return MomentMatrix(f_v.T @ right / n, n, label=f"proxy_{mode}")


def select_subset(world: SynthWorld, strategy: str, budget: int, prior: MomentMatrix,
                  seed: int, *, workers: int = 1) -> np.ndarray:
    """Pick ``budget`` training rows by ``strategy`` using teacher embeddings."""
    n = world.x_v.shape[0]
    if not 1 <= budget <= n:
        raise ValidationError(f"budget {budget} outside [1, {n}]")
    f_v, f_l = teacher_embeddings(world)
    full = SelectionResult.full(n)
    if strategy == "random":
        return random_select(n, budget, seed).kept
    if strategy == "vas_prior":
        return _top_k_positions(vas_scores(f_v, None, prior, workers=workers).scores, budget)
    if strategy == "vas_d":
        return vas_d(f_v, full, budget, workers=workers)[0].kept
    if strategy == "a_opt":
        return a_optimal_select(f_v, full, budget, workers=workers).kept
    if strategy == "v_opt":
        return v_optimal_select(f_v, full, budget, prior=prior, workers=workers).kept
    if strategy == "clip_top":
        return _top_k_positions(np.einsum("ij,ij->i", f_v, f_l), budget)
    raise ValidationError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")


def calibrate_noise_constant(cfg: SynthConfig, k: int, *, strategy: str = "random",
                             best: str = "additive", seeds: int = CALIBRATION_SEEDS) -> float:
    """Median of ``|rho Delta - VAS term| / noise_shape`` over ``seeds`` worlds.

    Uses its own seed stream, so the worlds never coincide with the trials
    they are later compared against. Returns 0 when there is no noise.
    """
    if cfg.noise_std == 0:
        return 0.0
    shape = noise_shape(cfg.d, k, k, cfg.noise_std)
    ratios = []
    for i in range(seeds):
        world = _world_for(cfg, _CALIBRATION_STREAM, i)
        s, u = _pair_for(world, strategy, k, best)
        rd, vt = noise_residual(world, s, u)
        ratios.append(abs(rd - vt) / shape)
    return float(np.median(ratios))


def _pair_for(world: SynthWorld, strategy: str, k: int, best: str):
    ws = world.config.seed
    prior = proxy_prior(world, derive_seed(ws, _PROXY_KEY))
    s = select_subset(world, strategy, k, prior, derive_seed(ws, _RANDOM_KEY))
    pool = np.arange(world.x_v.shape[0])
    T = world.test_cross_moment()
    if best == "exhaustive":
        u, _ = best_subset_oracle(world, pool, k, T, centered=True)
    else:
        u, _ = best_subset_additive(world, pool, k, T)
    return s, u


# -- loss-gap identity check ---------------------------------------------------------

@dataclass
class Lemma1Report:
    rows: list[list]
    constant: float
    meta: dict = field(default_factory=dict)

    COLUMNS = ["trial", "strategy", "seed", "rho_delta", "vas_term", "discrepancy",
               "objective", "noise_scale", "tolerance", "within"]

    def to_csv(self) -> str:
        return _csv(self.COLUMNS, self.rows)

    def column(self, name: str) -> np.ndarray:
        j = self.COLUMNS.index(name)
        return np.array([row[j] for row in self.rows])


def verify_lemma1(cfg: SynthConfig, pool_n: int, k: int, trials: int, *,
                  strategies=("random", "vas_prior"), constant: float | None = None) -> Lemma1Report:
    """Compare ``rho * Delta(S)`` with ``<Sigma_test, Sigma_best - Sigma_S>`` per trial.

    ``Sigma_best`` comes from exhaustive search over a pool of ``pool_n``
    training rows. Moments are mean-removed, matching the closed-form
    trainer, which makes the zero-noise comparison an identity. With noise
    the tolerance is ``3 * constant * noise_shape``; the constant is
    calibrated on a separate seed stream unless supplied.
    """
    cfg = replace(cfg, n_train=pool_n)
    if not 2 <= k <= pool_n:
        raise ValidationError(f"k={k} outside [2, {pool_n}]")
    if math.comb(pool_n, k) > MAX_COMBINATIONS:
        raise CombinatorialBlowup(f"C({pool_n}, {k}) exceeds {MAX_COMBINATIONS}")
    if constant is None:
        constant = calibrate_noise_constant(cfg, k, strategy=strategies[0], best="exhaustive")
    shape = noise_shape(cfg.d, k, k, cfg.noise_std)
    rows, resamples = [], []
    for t in range(trials):
        world = _world_for(cfg, t, resamples=resamples)
        for strategy in strategies:
            s, u = _pair_for(world, strategy, k, "exhaustive")
            rd, vt = noise_residual(world, s, u)
            objective = abs(subset_objective(world, u, world.test_cross_moment(), centered=True))
            disc = abs(rd - vt)
            tol = ENVELOPE_FACTOR * constant * shape if shape > 0 else 1e-6 * objective
            rows.append([t, strategy, world.config.seed, rd, vt, disc, objective, shape, tol,
                         disc <= tol])
    return Lemma1Report(rows, constant, {"resamples": resamples, "moments": "centered"})


# -- subset-selection bound ----------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Every right-hand-side term of the subset-selection bound, and the measured gap.

    ``delta_measured`` is ``rho * (L(S) - L(best))``. The check is
    ``delta_measured <= term_sum + envelope`` and is only meaningful when
    ``optimal_for_proxy`` is set (``S`` maximizes the proxy objective).
    """

    prior_gap: float
    subset_gap: float
    alignment: float
    teacher: TeacherErrorReport
    teacher_best: TeacherErrorReport
    delta_measured: float
    mean_shift: float
    prior_norm: float
    term_sum: float
    envelope: float
    mode: str
    optimal_for_proxy: bool

    @property
    def holds(self) -> bool:
        return self.delta_measured <= self.term_sum + self.envelope

    def as_row(self) -> list:
        return [self.prior_gap, self.subset_gap, self.alignment, self.teacher.eps_v,
                self.teacher.eps_l, self.teacher.eps_cross, self.mean_shift,
                self.delta_measured, self.term_sum, self.envelope, self.optimal_for_proxy,
                self.holds]

    COLUMNS = ["prior_gap", "subset_gap", "alignment", "eps_v", "eps_l", "eps_cross",
               "mean_shift", "delta_measured", "term_sum", "envelope", "optimal_for_proxy",
               "holds"]


def alignment_term(world: SynthWorld, subset) -> float:
    idx = np.asarray(subset, dtype=np.int64)
    inner = np.einsum("ij,ij->i", world.z_v[idx], world.z_l[idx]).mean()
    return float(math.sqrt(min(2.0, max(0.0, 1.0 - inner))))


def bound_report(world: SynthWorld, subset, sigma_test_proxy, mode: str = "vision_only",
                 teacher_v=None, teacher_l=None, *, envelope_constant: float = 0.0,
                 best=None) -> BoundReport:
    """Terms of the bound for ``subset`` against the uncentered hindsight best.

    The subset-dependent teacher slack is evaluated at both ``S`` and the
    best subset, as ``eps_v + sqrt(2) * alignment`` in vision-only mode or
    ``eps_cross`` in vision+language mode, and scaled by the proxy's
    operator norm. ``mean_shift`` accounts for the trainer removing sample
    means, which the uncentered objective ignores.
    """
    if mode not in ("vision_only", "vision_language"):
        raise ValidationError(f"unknown mode {mode!r}")
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size < 2:
        raise ValidationError("subset needs at least two rows")
    k = idx.size
    teacher_v = world.g_star_v if teacher_v is None else np.asarray(teacher_v)
    teacher_l = world.g_star_l if teacher_l is None else np.asarray(teacher_l)
    proxy = _sigma(sigma_test_proxy)
    T = world.test_cross_moment()
    pool = np.arange(world.x_v.shape[0])
    if best is None:
        best, _ = best_subset_additive(world, pool, k, T)
    best = np.asarray(best, dtype=np.int64)

    sig_s = subset_cross_moment(world.z_v, world.z_l, idx)
    sig_u = subset_cross_moment(world.z_v, world.z_l, best)
    prior_gap = float(np.linalg.norm(proxy - T, 2))
    subset_gap = nuclear_norm(sig_s - sig_u)
    prior_norm = float(np.linalg.norm(proxy, 2))
    rep_s = measure_teacher_error(world, teacher_v, teacher_l, idx)
    rep_u = measure_teacher_error(world, teacher_v, teacher_l, best)
    align_s, align_u = alignment_term(world, idx), alignment_term(world, best)
    if mode == "vision_only":
        slack = rep_s.eps_v + rep_u.eps_v + math.sqrt(2.0) * (align_s + align_u)
    else:
        slack = rep_s.eps_cross + rep_u.eps_cross

    def mean_term(sub):
        return frob(T, np.outer(world.z_v[sub].mean(axis=0), world.z_l[sub].mean(axis=0)))

    mean_shift = mean_term(idx) - mean_term(best)
    rho = world.config.rho
    delta = rho * (trained_loss(world, idx) - trained_loss(world, best))
    term_sum = prior_gap * subset_gap + prior_norm * slack + mean_shift
    envelope = ENVELOPE_FACTOR * envelope_constant * noise_shape(
        world.d, k, best.size, world.config.noise_std)

    # S must maximize the proxy objective among k-subsets for the bound to apply
    f_v, f_l = world.x_v @ teacher_v, world.x_l @ teacher_l
    right = f_v if mode == "vision_only" else f_l
    per = np.einsum("ij,ij->i", f_v @ proxy, right)
    top = np.sort(per)[::-1][:k].sum()
    optimal = bool(per[idx].sum() >= top - 1e-9 * max(1.0, abs(top)))
    return BoundReport(prior_gap, subset_gap, align_s, rep_s, rep_u, delta, mean_shift,
                       prior_norm, term_sum, envelope, mode, optimal)


def bound_trials(cfg: SynthConfig, budget: int, trials: int, *, mode: str = "vision_only",
                 constant: float | None = None) -> tuple[list[BoundReport], float]:
    """Bound check for the proxy-VAS subset over ``trials`` seeded worlds."""
    if constant is None:
        constant = calibrate_noise_constant(cfg, budget, strategy="vas_prior")
    out = []
    for t in range(trials):
        world = _world_for(cfg, t)
        ws = world.config.seed
        prior = proxy_prior(world, derive_seed(ws, _PROXY_KEY), mode=mode)
        if mode == "vision_only":
            s = select_subset(world, "vas_prior", budget, prior, 0)
        else:
            f_v, f_l = teacher_embeddings(world)
            per = vas_scores(f_v, f_l, prior).scores
            s = _top_k_positions(per, budget)
        out.append(bound_report(world, s, prior, mode, envelope_constant=constant))
    return out, constant


def bound_csv(reports: list[BoundReport]) -> str:
    return _csv(["trial"] + BoundReport.COLUMNS, [[t] + r.as_row() for t, r in enumerate(reports)])


# -- strategy comparison ----------------------------------------------------------------

@dataclass
class FaceoffReport:
    rows: list[list]
    strategies: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    COLUMNS = ["trial", "strategy", "seed", "loss_simplified", "loss_contrast", "accuracy"]

    def losses(self, strategy: str, form: str = "loss_simplified") -> np.ndarray:
        j = self.COLUMNS.index(form)
        return np.array([row[j] for row in self.rows if row[1] == strategy])

    def summary_rows(self) -> list[list]:
        out = []
        for s in self.strategies:
            vals = [self.losses(s, c) for c in self.COLUMNS[3:]]
            out.append([s] + [x for v in vals for x in (float(v.mean()), float(v.std()))])
        return out

    def to_csv(self) -> str:
        return _csv(self.COLUMNS, self.rows)

    def summary_csv(self) -> str:
        header = ["strategy"] + [f"{c}_{stat}" for c in self.COLUMNS[3:] for stat in ("mean", "std")]
        return _csv(header, self.summary_rows())


def strategy_faceoff(cfg: SynthConfig, budget: int, strategies=STRATEGIES, trials: int = 20, *,
                     accuracy_trials: int = 2000, workers: int = 1) -> FaceoffReport:
    """Train on each strategy's subset and record test loss (both forms) and accuracy.

    Every trial gets its own world from ``derive_seed(cfg.seed, trial, attempt)``;
    all strategies in a trial share that world and the same proxy prior.
    """
    strategies = tuple(strategies)
    for s in strategies:
        if s not in STRATEGIES:
            raise ValidationError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if cfg.n_test < 1:
        raise ValidationError("faceoff needs a test split")
    rows, resamples = [], []
    for t in range(trials):
        world = _world_for(cfg, t, resamples=resamples)
        ws = world.config.seed
        prior = proxy_prior(world, derive_seed(ws, _PROXY_KEY))
        classes = axis_classes(world)
        subsets = {s: select_subset(world, s, budget, prior, derive_seed(ws, _RANDOM_KEY),
                                    workers=workers) for s in strategies}
        for s in strategies:
            trained = closed_form_train(world, subsets[s])
            tl = test_loss(trained, world, seed=derive_seed(ws, _EVAL_KEY))
            acc = classification_accuracy(trained, world, classes, trials=accuracy_trials,
                                          seed=derive_seed(ws, _EVAL_KEY))
            rows.append([t, s, ws, tl.simplified, tl.contrast, acc])
    return FaceoffReport(rows, strategies, {"resamples": resamples})


__all__ = [
    "BoundReport",
    "FaceoffReport",
    "Lemma1Report",
    "STRATEGIES",
    "TeacherErrorReport",
    "best_subset_additive",
    "best_subset_oracle",
    "bound_csv",
    "bound_report",
    "bound_trials",
    "calibrate_noise_constant",
    "measure_teacher_error",
    "noise_residual",
    "noise_shape",
    "proxy_prior",
    "select_subset",
    "strategy_faceoff",
    "subset_cross_moment",
    "subset_objective",
    "verify_lemma1",
]
