"""The differentiable detector: forward, loss, input gradients, prediction.

A detector maps a (N, C, H, W) batch to per-sample probabilities that the
image is synthetic (class 1). Probabilities come from a 2-logit softmax, the
loss is mean cross-entropy in nats, and input gradients are exact backprop
through the backbone. Ties at probability 0.5 predict class 0 (real).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .backbones import build_backbone
from .errors import ContractError
from .images import as_label_vector
from .nn import Params, softmax_cross_entropy

ARCHITECTURES = ("small-conv", "small-attention")
INPUT_SPACES = ("pixel", "dire")


class DetectorModel:
    """A toy binary real/synthetic classifier with gradient access."""

    def __init__(
        self,
        architecture: str,
        input_space: str,
        channels: int,
        image_size: int,
        params: Params | None = None,
        seed: int | None = 0,
    ):
        if architecture not in ARCHITECTURES:
            raise ContractError(f"architecture must be one of {ARCHITECTURES}, got {architecture!r}")
        if input_space not in INPUT_SPACES:
            raise ContractError(f"input_space must be one of {INPUT_SPACES}, got {input_space!r}")
        self.architecture = architecture
        self.input_space = input_space
        self.channels = channels
        self.image_size = image_size
        self.backbone = build_backbone(architecture, channels, image_size)
        if params is None:
            params = self.backbone.init_params(np.random.default_rng(seed))
        self.params = params

    # -- shape / label contracts ------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.channels or x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ContractError(
                f"input shape {x.shape} does not match model input "
                f"(N, {self.channels}, {self.image_size}, {self.image_size})"
            )
        return x

    # -- inference ---------------------------------------------------------

    def class_probabilities(self, x: np.ndarray) -> np.ndarray:
        """(N, 2) softmax probabilities; rows sum to 1."""
        x = self._check_input(x)
        logits, _ = self.backbone.apply(self.params, x)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Per-sample probability that the image is synthetic (class 1)."""
        return self.class_probabilities(x)[:, 1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Label 1 iff P(synthetic) > 0.5; an exact tie predicts 0."""
        return (self.forward(x) > 0.5).astype(np.int64)

    # -- loss and gradients --------------------------------------------------

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        x = self._check_input(x)
        y = as_label_vector(y, batch_size=x.shape[0])
        logits, _ = self.backbone.apply(self.params, x)
        loss, _, _ = softmax_cross_entropy(logits, y)
        return float(loss)

    def input_gradient(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of the mean cross-entropy with respect to the input."""
        x = self._check_input(x)
        y = as_label_vector(y, batch_size=x.shape[0])
        logits, cache = self.backbone.apply(self.params, x)
        _, _, dlogits = softmax_cross_entropy(logits, y)
        _, dx = self.backbone.backward(self.params, cache, dlogits)
        return dx

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray):
        """(loss, param_grads, input_grad) for one batch."""
        x = self._check_input(x)
        y = as_label_vector(y, batch_size=x.shape[0])
        logits, cache = self.backbone.apply(self.params, x)
        loss, _, dlogits = softmax_cross_entropy(logits, y)
        grads, dx = self.backbone.backward(self.params, cache, dlogits)
        return float(loss), grads, dx

    # -- bookkeeping ---------------------------------------------------------

    def n_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def copy(self) -> "DetectorModel":
        return DetectorModel(
            self.architecture,
            self.input_space,
            self.channels,
            self.image_size,
            params={k: v.copy() for k, v in self.params.items()},
        )

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()
