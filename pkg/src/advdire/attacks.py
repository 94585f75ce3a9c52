"""White-box L-infinity attacks: FGSM, FGM, PGD, and PGD through DIRE.

All attacks return adversarial batches satisfying two hard constraints:
max |x' - x| <= epsilon and x' in [0, 1]. PGD follows the usual loop

    x'_0 = x + delta_0,   delta_0 ~ U(-eps, eps) or 0
    x'_k = clip_pixels( B(x'_{k-1} + alpha * sign(g), x - eps, x + eps) )

where g is the loss gradient at x'_{k-1} and B clamps elementwise. sign(0)
is 0, so a constant model leaves the input untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .images import clip_pixels

GRAD_MODES = ("identity-approximation", "surrogate")


@dataclass(frozen=True)
class AttackConfig:
    """L-infinity attack budget and iteration settings.

    ``step_size=None`` means epsilon / 4. ``num_steps`` is the PGD iteration
    count. The default budget of 8/255 is the conventional imperceptibility
    setting; every field is overridable.
    """

    epsilon: float = 8.0 / 255.0
    step_size: float | None = None
    num_steps: int = 10
    random_init: bool = True
    norm: str = "linf"
    grad_mode: str = "identity-approximation"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.num_steps < 1:
            raise ConfigError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.norm != "linf":
            raise ConfigError(f"only the linf norm is supported, got {self.norm!r}")
        if self.grad_mode not in GRAD_MODES:
            raise ConfigError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")
        if self.step_size is not None:
            if self.step_size <= 0.0:
                raise ConfigError(f"step_size must be positive, got {self.step_size}")
            if self.step_size > self.epsilon:
                warnings.warn(
                    f"step_size {self.step_size} exceeds epsilon {self.epsilon}; "
                    "each step will saturate the ball",
                    stacklevel=2,
                )

    @property
    def alpha(self) -> float:
        return self.epsilon / 4.0 if self.step_size is None else self.step_size


def project_box(delta: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clamp every element of a perturbation into [lo, hi]."""
    if lo > hi:
        raise ContractError(f"invalid box: lo {lo} > hi {hi}")
    return np.clip(delta, lo, hi)


def _init_delta(x: np.ndarray, cfg: AttackConfig, rng: np.random.Generator | None) -> np.ndarray:
    if cfg.random_init and cfg.epsilon > 0.0:
        if rng is None:
            raise ContractError("random_init=True requires an explicit rng")
        return rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape)
    return np.zeros_like(x)


def fgsm(model, x: np.ndarray, y: np.ndarray, epsilon: float) -> np.ndarray:
    """Single signed-gradient step of magnitude epsilon."""
    if epsilon < 0.0:
        raise ContractError(f"epsilon must be non-negative, got {epsilon}")
    g = model.input_gradient(x, y)
    return clip_pixels(x + epsilon * np.sign(g))


def fgm(model, x: np.ndarray, y: np.ndarray, epsilon: float) -> np.ndarray:
    """Single L2-normalized gradient step; a zero gradient leaves x unchanged."""
    if epsilon < 0.0:
        raise ContractError(f"epsilon must be non-negative, got {epsilon}")
    g = model.input_gradient(x, y)
    flat = g.reshape(g.shape[0], -1)
    norms = np.sqrt((flat * flat).sum(axis=1))
    scale = np.where(norms > 0.0, epsilon / np.where(norms > 0.0, norms, 1.0), 0.0)
    return clip_pixels(x + g * scale[:, None, None, None])


def pgd(
    model,
    x: np.ndarray,
    y: np.ndarray,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Iterated signed gradient ascent projected into the epsilon ball."""
    x = np.asarray(x, dtype=np.float64)
    delta = _init_delta(x, cfg, rng)
    x_adv = clip_pixels(x + delta)
    for _ in range(cfg.num_steps):
        g = model.input_gradient(x_adv, y)
        stepped = x_adv + cfg.alpha * np.sign(g)
        delta = project_box(stepped - x, -cfg.epsilon, cfg.epsilon)
        x_adv = clip_pixels(x + delta)
    return x_adv


def random_perturbation(
    x: np.ndarray, epsilon: float, rng: np.random.Generator
) -> np.ndarray:
    """Uniform noise baseline of the same budget, for attack comparisons."""
    return clip_pixels(x + rng.uniform(-epsilon, epsilon, size=x.shape))


def dire_input_gradient(
    model,
    x_adv: np.ndarray,
    y: np.ndarray,
    schedule,
    predictor,
    dire_scale: float,
) -> np.ndarray:
    """Loss gradient of the composite pipeline x -> DIRE(x) -> f w.r.t. x.

    The DDIM round trip is treated as a constant in the backward pass (its
    output is detached), so the chain rule reduces to

        dL/dx = dL/dD * d(clip(s*|x - r|))/dx,   r = R(I(x)) held fixed,

    which is exact whenever the round trip reproduces x exactly.
    """
    from .diffusion import reconstruct_from_image

    recon = reconstruct_from_image(x_adv, schedule, predictor)
    residual = x_adv - recon
    scaled = dire_scale * np.abs(residual)
    feat = np.clip(scaled, 0.0, 1.0)
    g_feat = model.input_gradient(feat, y)
    inside = (scaled < 1.0).astype(np.float64)
    return g_feat * inside * dire_scale * np.sign(residual)


def pgd_through_dire(
    model,
    x: np.ndarray,
    y: np.ndarray,
    cfg: AttackConfig,
    schedule,
    predictor,
    dire_scale: float,
    surrogate=None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """PGD against a detector that consumes DIRE maps.

    ``grad_mode='identity-approximation'`` backpropagates through the DIRE
    map with the reconstruction branch detached; ``'surrogate'`` takes
    gradients from a separate pixel-space detector instead. The epsilon ball
    constrains the pixel-space input either way.
    """
    if cfg.grad_mode == "surrogate" and surrogate is None:
        raise ConfigError("grad_mode='surrogate' requires a surrogate pixel-space detector")
    x = np.asarray(x, dtype=np.float64)
    delta = _init_delta(x, cfg, rng)
    x_adv = clip_pixels(x + delta)
    for _ in range(cfg.num_steps):
        if cfg.grad_mode == "identity-approximation":
            g = dire_input_gradient(model, x_adv, y, schedule, predictor, dire_scale)
        else:
            g = surrogate.input_gradient(x_adv, y)
        stepped = x_adv + cfg.alpha * np.sign(g)
        delta = project_box(stepped - x, -cfg.epsilon, cfg.epsilon)
        x_adv = clip_pixels(x + delta)
    return x_adv
