"""Linear latent-variable world: unit-norm paired latents mapped through
orthonormal ``d x r`` matrices plus isotropic Gaussian noise."""

from __future__ import annotations

import functools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..embstore import EmbeddingMatrix, Modality, atomic_write, load_embeddings, save_embeddings
from ..errors import ConfigInvalid, IoFailure

CALIBRATION_SAMPLES = 50_000
CALIBRATION_ITERS = 300
_CALIBRATION_SEED = 0x5EED_CA11


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of ``seed`` for the given keys."""
    state = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return int(state.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class SynthConfig:
    r: int = 4
    d: int = 16
    n_train: int = 200
    n_test: int = 2000
    sigma_train_diag: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    sigma_test_diag: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    noise_std: float = 0.0
    rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma_train_diag", tuple(float(x) for x in self.sigma_train_diag))
        object.__setattr__(self, "sigma_test_diag", tuple(float(x) for x in self.sigma_test_diag))
        self.validate()

    def validate(self) -> None:
        if not (self.d >= self.r >= 1):
            raise ConfigInvalid(f"need d >= r >= 1, got d={self.d}, r={self.r}")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigInvalid("n_train must be >= 1 and n_test >= 0")
        for name in ("sigma_train_diag", "sigma_test_diag"):
            diag = getattr(self, name)
            if len(diag) != self.r:
                raise ConfigInvalid(f"{name} needs {self.r} entries, got {len(diag)}")
            if any(not (x > 0) for x in diag):
                raise ConfigInvalid(f"{name} entries must be > 0")
            # unit-norm latents bound the trace of any cross-moment by 1
            if sum(diag) > 1.0 + 1e-12:
                raise ConfigInvalid(f"{name} sums to {sum(diag):.4g} > 1")
        if self.noise_std < 0:
            raise ConfigInvalid("noise_std must be >= 0")
        if not self.rho > 0:
            raise ConfigInvalid("rho must be > 0")

    def with_seed(self, seed: int) -> "SynthConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class LatentMixture:
    """``z = normalize(scale * (shared + kappa * own))`` for each modality."""

    scale: tuple[float, ...]
    kappa: float
    residual: float

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        r = len(self.scale)
        a = np.asarray(self.scale)
        shared = rng.standard_normal((n, r))
        own_v = rng.standard_normal((n, r))
        own_l = rng.standard_normal((n, r))
        return _mix(a, self.kappa, shared, own_v, own_l)


def _normalize(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return z / norms


def _mix(a, kappa, shared, own_v, own_l):
    z_v = _normalize(a * (shared + kappa * own_v))
    z_l = _normalize(a * (shared + kappa * own_l))
    return z_v, z_l


@functools.lru_cache(maxsize=64)
def calibrate_mixture(target: tuple[float, ...]) -> LatentMixture:
    """Fit per-coordinate scales and the independent share so that
    ``E[z_v z_l^T]`` after normalization matches ``diag(target)``.

    Uses fixed-point updates on a fixed calibration sample (common random
    numbers), so the result is a pure function of ``target``.
    """
    t = np.asarray(target, dtype=np.float64)
    r = t.size
    rng = np.random.default_rng(_CALIBRATION_SEED + r)
    shared = rng.standard_normal((CALIBRATION_SAMPLES, r))
    own_v = rng.standard_normal((CALIBRATION_SAMPLES, r))
    own_l = rng.standard_normal((CALIBRATION_SAMPLES, r))
    a = np.sqrt(t / t.sum())
    # a full unit trace only fits identical pairs, so the independent share stays zero
    paired_only = t.sum() >= 1.0 - 1e-12
    kappa = 0.0 if paired_only else float(np.sqrt(1.0 / t.sum() - 1.0))
    est = t
    for _ in range(CALIBRATION_ITERS):
        z_v, z_l = _mix(a, kappa, shared, own_v, own_l)
        est = np.mean(z_v * z_l, axis=0)
        if np.abs(est - t).max() < 1e-10:
            break
        a = a * np.sqrt(t / est)
        a = a / np.linalg.norm(a)
        if not paired_only:
            ratio = est.sum() / t.sum()
            kappa = float(np.sqrt(max(0.0, (1.0 + kappa**2) * ratio - 1.0)))
    z_v, z_l = _mix(a, kappa, shared, own_v, own_l)
    est = np.mean(z_v * z_l, axis=0)
    return LatentMixture(tuple(float(x) for x in a), kappa, float(np.abs(est - t).max()))


def random_orthonormal(d: int, r: int, rng: np.random.Generator) -> np.ndarray:
    q, rr = np.linalg.qr(rng.standard_normal((d, r)))
    return q * np.sign(np.diag(rr))


@dataclass(eq=False)
class SynthWorld:
    g_star_v: np.ndarray
    g_star_l: np.ndarray
    z_v: np.ndarray
    z_l: np.ndarray
    x_v: np.ndarray
    x_l: np.ndarray
    xi_v: np.ndarray
    xi_l: np.ndarray
    z_v_test: np.ndarray
    z_l_test: np.ndarray
    x_v_test: np.ndarray
    x_l_test: np.ndarray
    config: SynthConfig
    train_mixture: LatentMixture
    test_mixture: LatentMixture
    meta: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.config.r

    @property
    def d(self) -> int:
        return self.config.d

    def observe(self, z_v, z_l, rng: np.random.Generator):
        """Map latents to observations with fresh noise; returns ``(x_v, x_l)``."""
        s = self.config.noise_std
        x_v = z_v @ self.g_star_v.T
        x_l = z_l @ self.g_star_l.T
        if s > 0:
            x_v = x_v + s * rng.standard_normal(x_v.shape)
            x_l = x_l + s * rng.standard_normal(x_l.shape)
        return x_v, x_l

    def sample_test(self, n: int, rng: np.random.Generator):
        """Fresh ``(z_v, z_l, x_v, x_l)`` drawn from the test distribution."""
        z_v, z_l = self.test_mixture.sample(n, rng)
        x_v, x_l = self.observe(z_v, z_l, rng)
        return z_v, z_l, x_v, x_l

    def test_cross_moment(self) -> np.ndarray:
        """Empirical latent test cross-moment ``(1/n) sum z_v z_l^T``."""
        return self.z_v_test.T @ self.z_l_test / self.z_v_test.shape[0]


def gen_world(cfg: SynthConfig) -> SynthWorld:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    g_v = random_orthonormal(cfg.d, cfg.r, rng)
    g_l = random_orthonormal(cfg.d, cfg.r, rng)
    train_mix = calibrate_mixture(cfg.sigma_train_diag)
    test_mix = calibrate_mixture(cfg.sigma_test_diag)
    z_v, z_l = train_mix.sample(cfg.n_train, rng)
    xi_v = cfg.noise_std * rng.standard_normal((cfg.n_train, cfg.d))
    xi_l = cfg.noise_std * rng.standard_normal((cfg.n_train, cfg.d))
    x_v = z_v @ g_v.T + xi_v
    x_l = z_l @ g_l.T + xi_l
    zt_v, zt_l = test_mix.sample(cfg.n_test, rng)
    xt_v = zt_v @ g_v.T + cfg.noise_std * rng.standard_normal((cfg.n_test, cfg.d))
    xt_l = zt_l @ g_l.T + cfg.noise_std * rng.standard_normal((cfg.n_test, cfg.d))
    meta = {
        "train_mixture": asdict(train_mix),
        "test_mixture": asdict(test_mix),
        "latent_sampler": "shared/independent gaussian mixture, rows renormalized",
    }
    return SynthWorld(g_v, g_l, z_v, z_l, x_v, x_l, xi_v, xi_l, zt_v, zt_l, xt_v, xt_l,
                      cfg, train_mix, test_mix, meta)


_WORLD_ARRAYS = {
    "z_v": Modality.VISION, "z_l": Modality.LANGUAGE,
    "x_v": Modality.VISION, "x_l": Modality.LANGUAGE,
    "z_v_test": Modality.VISION, "z_l_test": Modality.LANGUAGE,
    "x_v_test": Modality.VISION, "x_l_test": Modality.LANGUAGE,
}


def save_world(world: SynthWorld, directory) -> None:
    """Snapshot latents and observations as VEMB files plus a JSON config.

    The files store float32, so a reloaded world matches the original only
    to single precision. Empty test splits are skipped.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    for name, modality in _WORLD_ARRAYS.items():
        arr = getattr(world, name)
        if arr.shape[0]:
            save_embeddings(EmbeddingMatrix(arr, modality=modality), directory / f"{name}.vemb")
    info = {
        "config": asdict(world.config),
        "g_star_v": world.g_star_v.tolist(),
        "g_star_l": world.g_star_l.tolist(),
        "meta": world.meta,
    }
    atomic_write(directory / "world.json", json.dumps(info, indent=1, sort_keys=True))


def load_world_arrays(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    out = {}
    for name in _WORLD_ARRAYS:
        path = directory / f"{name}.vemb"
        if path.exists():
            out[name] = np.asarray(load_embeddings(path).data, dtype=np.float64)
    try:
        info = json.loads((directory / "world.json").read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read world.json in {directory}: {exc}") from exc
    out["g_star_v"] = np.array(info["g_star_v"])
    out["g_star_l"] = np.array(info["g_star_l"])
    return out
