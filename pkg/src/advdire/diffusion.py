"""Deterministic DDIM reconstruction/inversion and DIRE maps.

With all sigmas zero the reverse process is deterministic, and one
reconstruction step from t to t-1 reads

    x_{t-1} = sqrt(abar_{t-1}) * (x_t - sqrt(1-abar_t) * eps) / sqrt(abar_t)
              + sqrt(1-abar_{t-1}) * eps,          eps = predictor(x_t, t).

Inversion runs the same ODE upward:

    x_{t+1}/sqrt(abar_{t+1}) = x_t/sqrt(abar_t)
              + (sqrt((1-abar_{t+1})/abar_{t+1}) - sqrt((1-abar_t)/abar_t)) * eps.

abar_0 is defined as 1, so t = 0 is the clean-image state. The DIRE map of
an image is |x - R(I(x))|: generated samples sit in the model's own
generation space and reconstruct with small residual, real images do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbones import NoisePredictorNet
from .errors import ContractError, DatasetError
from .nn import Adam, Params


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cumulative-product alpha schedule; sigma must stay zero for DDIM."""

    alpha_bar: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.ndim != 1:
            raise ContractError("alpha_bar must be a 1-D sequence")
        if ab.size and (ab.min() <= 0.0 or ab.max() > 1.0):
            raise ContractError("alpha_bar values must lie in (0, 1]")
        if ab.size and np.any(np.diff(ab) >= 0.0):
            raise ContractError("alpha_bar must be strictly decreasing")
        sig = self.sigma
        sig = np.zeros(ab.size) if sig is None else np.asarray(sig, dtype=np.float64)
        object.__setattr__(self, "sigma", sig)
        if sig.shape != ab.shape:
            raise ContractError("sigma must match alpha_bar in length")
        if sig.size and sig.min() < 0.0:
            raise ContractError("sigma values must be non-negative")

    @classmethod
    def linear(cls, num_steps: int = 20, base_steps: int = 1000, alpha_bar_end: float = 0.005):
        """Linear alpha-bar schedule subsampled from a longer base grid."""
        if num_steps < 0 or (num_steps > 0 and base_steps < num_steps):
            raise ContractError(f"invalid step counts: {num_steps} of {base_steps}")
        if num_steps == 0:
            return cls(alpha_bar=np.zeros(0))
        base = np.linspace(1.0, alpha_bar_end, base_steps + 1)
        idx = np.linspace(0, base_steps, num_steps + 1).round().astype(int)[1:]
        return cls(alpha_bar=base[idx])

    @property
    def num_steps(self) -> int:
        return int(self.alpha_bar.size)

    def abar(self, t: int) -> float:
        """alpha_bar at timestep t, with abar(0) := 1."""
        if t < 0 or t > self.num_steps:
            raise ContractError(f"timestep {t} outside [0, {self.num_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def require_deterministic(self, t: int) -> None:
        if t >= 1 and float(self.sigma[t - 1]) != 0.0:
            raise ContractError(f"sigma[{t}] != 0: stochastic DDIM is not supported")


@dataclass
class DiffusionState:
    """An array in diffusion space together with its timestep index."""

    x: np.ndarray
    t: int

    def __post_init__(self):
        if self.t < 0:
            raise ContractError(f"timestep must be non-negative, got {self.t}")


class NoisePredictor:
    """Trainable eps_theta(x_t, t) wrapper around the toy conv predictor."""

    def __init__(
        self,
        channels: int,
        image_size: int,
        num_steps: int,
        width: int = 32,
        params: Params | None = None,
        seed: int | None = 0,
    ):
        self.channels = channels
        self.image_size = image_size
        self.num_steps = num_steps
        self.width = width
        self.net = NoisePredictorNet(channels, image_size, num_steps, width=width)
        self.params = self.net.init_params(np.random.default_rng(seed)) if params is None else params

    def predict(self, x_t: np.ndarray, t) -> np.ndarray:
        out, _ = self.net.apply(self.params, x_t, t)
        return out

    def copy(self) -> "NoisePredictor":
        return NoisePredictor(
            self.channels,
            self.image_size,
            self.num_steps,
            width=self.width,
            params={k: v.copy() for k, v in self.params.items()},
        )


class ConstantPredictor:
    """eps_theta that always returns the same value; value 0 gives exact round trips."""

    def __init__(self, value: float | np.ndarray = 0.0):
        self.value = value

    def predict(self, x_t: np.ndarray, t) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.value, dtype=np.float64), x_t.shape).copy()


# ---------------------------------------------------------------------------
# single steps


def reconstruction_update(x_t: np.ndarray, eps: np.ndarray, ab_t: float, ab_prev: float) -> np.ndarray:
    """One deterministic DDIM reverse update given the two alpha-bar values."""
    x0_pred = (x_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    return np.sqrt(ab_prev) * x0_pred + np.sqrt(1.0 - ab_prev) * eps


def inversion_update(x_t: np.ndarray, eps: np.ndarray, ab_t: float, ab_next: float) -> np.ndarray:
    """One DDIM inversion update given the two alpha-bar values."""
    coeff = np.sqrt((1.0 - ab_next) / ab_next) - np.sqrt((1.0 - ab_t) / ab_t)
    return np.sqrt(ab_next) * (x_t / np.sqrt(ab_t) + coeff * eps)


def ddim_reconstruction_step(state: DiffusionState, schedule: DiffusionSchedule, predictor) -> DiffusionState:
    """Advance one step toward the clean image (t -> t-1)."""
    if state.t < 1:
        raise ContractError("reconstruction step underflow: state is already at t=0")
    if state.t > schedule.num_steps:
        raise ContractError(f"state timestep {state.t} exceeds schedule length {schedule.num_steps}")
    schedule.require_deterministic(state.t)
    eps = predictor.predict(state.x, state.t)
    x_prev = reconstruction_update(state.x, eps, schedule.abar(state.t), schedule.abar(state.t - 1))
    return DiffusionState(x=x_prev, t=state.t - 1)


def ddim_inversion_step(state: DiffusionState, schedule: DiffusionSchedule, predictor) -> DiffusionState:
    """Advance one step toward the noise latent (t -> t+1)."""
    if state.t > schedule.num_steps - 1:
        raise ContractError(f"inversion step overflow: state is already at t={state.t}")
    eps = predictor.predict(state.x, state.t)
    x_next = inversion_update(state.x, eps, schedule.abar(state.t), schedule.abar(state.t + 1))
    return DiffusionState(x=x_next, t=state.t + 1)


# ---------------------------------------------------------------------------
# full chains


def invert(x0: np.ndarray, schedule: DiffusionSchedule, predictor) -> DiffusionState:
    """Deterministically map a clean image batch to its noise latent."""
    state = DiffusionState(x=np.asarray(x0, dtype=np.float64), t=0)
    for _ in range(schedule.num_steps):
        state = ddim_inversion_step(state, schedule, predictor)
    return state


def reconstruct(state: DiffusionState, schedule: DiffusionSchedule, predictor) -> np.ndarray:
    """Run the full reverse chain from t = T down to the clean image."""
    if state.t != schedule.num_steps:
        raise ContractError(
            f"reconstruction must start at t={schedule.num_steps}, got t={state.t}"
        )
    for _ in range(schedule.num_steps):
        state = ddim_reconstruction_step(state, schedule, predictor)
    return state.x


def reconstruct_from_image(x0: np.ndarray, schedule: DiffusionSchedule, predictor) -> np.ndarray:
    """The round trip R(I(x0)): invert to the latent, then reconstruct."""
    return reconstruct(invert(x0, schedule, predictor), schedule, predictor)


@dataclass(frozen=True)
class DireMap:
    """Elementwise absolute reconstruction residual of an image batch."""

    residual: np.ndarray

    def __post_init__(self):
        res = np.asarray(self.residual, dtype=np.float64)
        object.__setattr__(self, "residual", res)
        if res.min() < 0.0:
            raise ContractError("DIRE residuals must be non-negative")

    @property
    def per_image_mean(self) -> np.ndarray:
        return self.residual.mean(axis=(1, 2, 3))

    @property
    def per_image_max(self) -> np.ndarray:
        return self.residual.max(axis=(1, 2, 3))

    @property
    def mean(self) -> float:
        return float(self.residual.mean())

    @property
    def max(self) -> float:
        return float(self.residual.max())


def dire(x0: np.ndarray, schedule: DiffusionSchedule, predictor) -> DireMap:
    """DIRE(x0) = |x0 - R(I(x0))|."""
    x0 = np.asarray(x0, dtype=np.float64)
    return DireMap(residual=np.abs(x0 - reconstruct_from_image(x0, schedule, predictor)))


def dire_features(
    x0: np.ndarray, schedule: DiffusionSchedule, predictor, scale: float
) -> np.ndarray:
    """DIRE maps rescaled and clamped into [0, 1] for detector consumption."""
    return np.clip(scale * dire(x0, schedule, predictor).residual, 0.0, 1.0)


def sample_images(
    n: int,
    schedule: DiffusionSchedule,
    predictor,
    rng: np.random.Generator,
    batch_size: int = 64,
) -> np.ndarray:
    """Draw noise latents and run the deterministic reverse chain; clip to [0, 1]."""
    shape = (predictor.channels, predictor.image_size, predictor.image_size)
    out = []
    remaining = n
    while remaining > 0:
        b = min(batch_size, remaining)
        x_t = rng.standard_normal((b, *shape))
        x0 = reconstruct(DiffusionState(x=x_t, t=schedule.num_steps), schedule, predictor)
        out.append(np.clip(x0, 0.0, 1.0))
        remaining -= b
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# toy training


@dataclass(frozen=True)
class DiffusionTrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 3e-3
    width: int = 16
    seed: int = 0


def denoising_loss(
    predictor: NoisePredictor,
    images: np.ndarray,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> float:
    """Mean squared eps-prediction error over one noising draw per image."""
    t = rng.integers(1, schedule.num_steps + 1, size=images.shape[0])
    eps = rng.standard_normal(images.shape)
    ab = schedule.alpha_bar[t - 1][:, None, None, None]
    x_t = np.sqrt(ab) * images + np.sqrt(1.0 - ab) * eps
    pred = predictor.predict(x_t, t)
    return float(((pred - eps) ** 2).mean())


def train_toy_diffusion(
    images: np.ndarray,
    schedule: DiffusionSchedule,
    cfg: DiffusionTrainConfig,
) -> NoisePredictor:
    """Fit the toy noise predictor on an image family; deterministic per seed."""
    images = np.asarray(images, dtype=np.float64)
    if images.size == 0:
        raise DatasetError("cannot train the toy diffusion model on an empty dataset")
    n, c, h, _ = images.shape
    predictor = NoisePredictor(c, h, schedule.num_steps, width=cfg.width, seed=cfg.seed)
    opt = Adam(predictor.params, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = images[order[start : start + cfg.batch_size]]
            t = rng.integers(1, schedule.num_steps + 1, size=batch.shape[0])
            eps = rng.standard_normal(batch.shape)
            ab = schedule.alpha_bar[t - 1][:, None, None, None]
            x_t = np.sqrt(ab) * batch + np.sqrt(1.0 - ab) * eps
            pred, cache = predictor.net.apply(predictor.params, x_t, t)
            diff = pred - eps
            dout = 2.0 * diff / diff.size
            grads, _ = predictor.net.backward(predictor.params, cache, dout)
            opt.step(grads)
    return predictor
