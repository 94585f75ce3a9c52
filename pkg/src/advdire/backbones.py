"""Toy detector backbones and the toy noise-prediction network.

Two sub-1M-parameter architectures stand in for the full-scale CNN and
transformer detectors: a 4-layer conv net ("small-conv") and a 2-block
patch-attention net ("small-attention"). Both expose the same interface:

    init_params(rng) -> params
    apply(params, x) -> (logits, cache)
    backward(params, cache, dlogits) -> (param_grads, input_grad)

The classifier head is zero-initialized so a fresh model outputs probability
0.5 for every input.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ContractError
from .nn import Params


class SmallConvNet:
    """Four 3x3 conv layers (two strided), global average pool, linear head."""

    def __init__(self, channels: int, image_size: int, widths=(16, 32, 32, 32)):
        self.channels = channels
        self.image_size = image_size
        self.widths = tuple(widths)
        self.strides = (1, 2, 2, 1)

    def init_params(self, rng: np.random.Generator) -> Params:
        params: Params = {}
        c_in = self.channels
        for i, c_out in enumerate(self.widths):
            params[f"conv{i}.w"] = nn.he_normal(rng, (c_out, c_in, 3, 3), fan_in=c_in * 9)
            params[f"conv{i}.b"] = nn.zeros((c_out,))
            c_in = c_out
        params["head.w"] = nn.zeros((c_in, 2))
        params["head.b"] = nn.zeros((2,))
        return params

    def apply(self, params: Params, x: np.ndarray):
        caches = []
        h = x
        for i, stride in enumerate(self.strides):
            h, c_conv = nn.conv2d(h, params[f"conv{i}.w"], params[f"conv{i}.b"], stride=stride, pad=1)
            h, c_relu = nn.relu(h)
            caches.append((c_conv, c_relu))
        pooled = h.mean(axis=(2, 3))
        logits, c_head = nn.dense(pooled, params["head.w"], params["head.b"])
        return logits, (caches, h.shape, c_head)

    def backward(self, params: Params, cache, dlogits: np.ndarray):
        caches, feat_shape, c_head = cache
        grads: Params = {}
        dpooled, grads["head.w"], grads["head.b"] = nn.dense_backward(dlogits, c_head)
        n, c, fh, fw = feat_shape
        dh = np.broadcast_to(dpooled[:, :, None, None], feat_shape) / (fh * fw)
        for i in reversed(range(len(self.strides))):
            c_conv, c_relu = caches[i]
            dh = nn.relu_backward(dh, c_relu)
            dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = nn.conv2d_backward(dh, c_conv)
        return grads, dh


class PatchAttentionNet:
    """Patch embedding + 2 pre-norm single-head attention blocks + mean pool."""

    def __init__(
        self,
        channels: int,
        image_size: int,
        patch_size: int = 8,
        embed_dim: int = 32,
        mlp_dim: int = 64,
        blocks: int = 2,
    ):
        if image_size % patch_size != 0:
            raise ContractError(
                f"image size {image_size} is not divisible by patch size {patch_size}"
            )
        self.channels = channels
        self.image_size = image_size
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.mlp_dim = mlp_dim
        self.blocks = blocks
        self.n_patches = (image_size // patch_size) ** 2
        self.patch_dim = channels * patch_size * patch_size

    def init_params(self, rng: np.random.Generator) -> Params:
        d, m = self.embed_dim, self.mlp_dim
        params: Params = {
            "embed.w": nn.he_normal(rng, (self.patch_dim, d), fan_in=self.patch_dim),
            "embed.b": nn.zeros((d,)),
            "pos": rng.standard_normal((self.n_patches, d)) * 0.02,
        }
        for i in range(self.blocks):
            p = f"block{i}."
            params[p + "ln1.g"] = np.ones(d)
            params[p + "ln1.b"] = nn.zeros((d,))
            for name in ("wq", "wk", "wv", "wo"):
                params[p + name] = nn.he_normal(rng, (d, d), fan_in=d)
            params[p + "bo"] = nn.zeros((d,))
            params[p + "ln2.g"] = np.ones(d)
            params[p + "ln2.b"] = nn.zeros((d,))
            params[p + "mlp1.w"] = nn.he_normal(rng, (d, m), fan_in=d)
            params[p + "mlp1.b"] = nn.zeros((m,))
            params[p + "mlp2.w"] = nn.he_normal(rng, (m, d), fan_in=m)
            params[p + "mlp2.b"] = nn.zeros((d,))
        params["ln_out.g"] = np.ones(d)
        params["ln_out.b"] = nn.zeros((d,))
        params["head.w"] = nn.zeros((d, 2))
        params["head.b"] = nn.zeros((2,))
        return params

    def _patchify(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        ps = self.patch_size
        gh, gw = h // ps, w // ps
        t = x.reshape(n, c, gh, ps, gw, ps).transpose(0, 2, 4, 1, 3, 5)
        return t.reshape(n, gh * gw, c * ps * ps)

    def _unpatchify_grad(self, dpatches: np.ndarray, x_shape) -> np.ndarray:
        n, c, h, w = x_shape
        ps = self.patch_size
        gh, gw = h // ps, w // ps
        t = dpatches.reshape(n, gh, gw, c, ps, ps).transpose(0, 3, 1, 4, 2, 5)
        return t.reshape(n, c, h, w)

    def apply(self, params: Params, x: np.ndarray):
        patches = self._patchify(x)
        h, c_embed = nn.dense(patches, params["embed.w"], params["embed.b"])
        h = h + params["pos"]
        block_caches = []
        scale = 1.0 / np.sqrt(self.embed_dim)
        for i in range(self.blocks):
            p = f"block{i}."
            u, c_ln1 = nn.layernorm(h, params[p + "ln1.g"], params[p + "ln1.b"])
            q = u @ params[p + "wq"]
            k = u @ params[p + "wk"]
            v = u @ params[p + "wv"]
            att = nn.softmax(q @ k.transpose(0, 2, 1) * scale, axis=-1)
            ctx = att @ v
            attn_out, c_proj = nn.dense(ctx, params[p + "wo"], params[p + "bo"])
            h1 = h + attn_out
            u2, c_ln2 = nn.layernorm(h1, params[p + "ln2.g"], params[p + "ln2.b"])
            m1, c_m1 = nn.dense(u2, params[p + "mlp1.w"], params[p + "mlp1.b"])
            m1r, c_mr = nn.relu(m1)
            m2, c_m2 = nn.dense(m1r, params[p + "mlp2.w"], params[p + "mlp2.b"])
            h = h1 + m2
            block_caches.append((c_ln1, u, q, k, v, att, ctx, c_proj, c_ln2, c_m1, c_mr, c_m2))
        hn, c_lnout = nn.layernorm(h, params["ln_out.g"], params["ln_out.b"])
        pooled = hn.mean(axis=1)
        logits, c_head = nn.dense(pooled, params["head.w"], params["head.b"])
        cache = (x.shape, c_embed, block_caches, c_lnout, hn.shape, c_head)
        return logits, cache

    def backward(self, params: Params, cache, dlogits: np.ndarray):
        x_shape, c_embed, block_caches, c_lnout, hn_shape, c_head = cache
        grads: Params = {}
        dpooled, grads["head.w"], grads["head.b"] = nn.dense_backward(dlogits, c_head)
        dhn = np.broadcast_to(dpooled[:, None, :], hn_shape) / hn_shape[1]
        dh, grads["ln_out.g"], grads["ln_out.b"] = nn.layernorm_backward(dhn, c_lnout)
        scale = 1.0 / np.sqrt(self.embed_dim)
        for i in reversed(range(self.blocks)):
            p = f"block{i}."
            c_ln1, u, q, k, v, att, ctx, c_proj, c_ln2, c_m1, c_mr, c_m2 = block_caches[i]
            # mlp branch
            dm2 = dh
            dm1r, grads[p + "mlp2.w"], grads[p + "mlp2.b"] = nn.dense_backward(dm2, c_m2)
            dm1 = nn.relu_backward(dm1r, c_mr)
            du2, grads[p + "mlp1.w"], grads[p + "mlp1.b"] = nn.dense_backward(dm1, c_m1)
            dh1, grads[p + "ln2.g"], grads[p + "ln2.b"] = nn.layernorm_backward(du2, c_ln2)
            dh1 = dh1 + dh  # residual
            # attention branch
            dattn_out = dh1
            dctx, grads[p + "wo"], grads[p + "bo"] = nn.dense_backward(dattn_out, c_proj)
            datt = dctx @ v.transpose(0, 2, 1)
            dv = att.transpose(0, 2, 1) @ dctx
            dscores = nn.softmax_backward(datt, att, axis=-1) * scale
            dq = dscores @ k
            dk = dscores.transpose(0, 2, 1) @ q
            du = dq @ params[p + "wq"].T + dk @ params[p + "wk"].T + dv @ params[p + "wv"].T
            d2 = u.shape[-1]
            uf = u.reshape(-1, d2)
            grads[p + "wq"] = uf.T @ dq.reshape(-1, d2)
            grads[p + "wk"] = uf.T @ dk.reshape(-1, d2)
            grads[p + "wv"] = uf.T @ dv.reshape(-1, d2)
            dh_pre, grads[p + "ln1.g"], grads[p + "ln1.b"] = nn.layernorm_backward(du, c_ln1)
            dh = dh_pre + dh1  # residual
        grads["pos"] = dh.sum(axis=0)
        dpatches, grads["embed.w"], grads["embed.b"] = nn.dense_backward(dh, c_embed)
        dx = self._unpatchify_grad(dpatches, x_shape)
        return grads, dx


class NoisePredictorNet:
    """Small conv net predicting the noise component of a diffused image.

    The timestep enters through a sinusoidal embedding of t / num_steps,
    projected to per-channel biases for the first two conv layers. The final
    conv is zero-initialized so an untrained predictor outputs exactly zero.
    """

    N_FREQS = 4

    def __init__(self, channels: int, image_size: int, num_steps: int, width: int = 32):
        self.channels = channels
        self.image_size = image_size
        self.num_steps = num_steps
        self.width = width

    def init_params(self, rng: np.random.Generator) -> Params:
        w, c = self.width, self.channels
        femb = 2 * self.N_FREQS
        return {
            "conv0.w": nn.he_normal(rng, (w, c, 3, 3), fan_in=c * 9),
            "conv0.b": nn.zeros((w,)),
            "temb0.w": nn.he_normal(rng, (femb, w), fan_in=femb),
            "temb0.b": nn.zeros((w,)),
            "conv1.w": nn.he_normal(rng, (w, w, 3, 3), fan_in=w * 9),
            "conv1.b": nn.zeros((w,)),
            "temb1.w": nn.he_normal(rng, (femb, w), fan_in=femb),
            "temb1.b": nn.zeros((w,)),
            "conv2.w": nn.zeros((c, w, 3, 3)),
            "conv2.b": nn.zeros((c,)),
        }

    def time_features(self, t, batch: int) -> np.ndarray:
        """Sinusoidal features of the normalized timestep, shape (N, 2*F)."""
        tau = np.atleast_1d(np.asarray(t, dtype=np.float64)) / max(self.num_steps, 1)
        if tau.shape[0] == 1:
            tau = np.full(batch, tau[0])
        freqs = 2.0 ** np.arange(self.N_FREQS)
        ang = 2.0 * np.pi * tau[:, None] * freqs[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def apply(self, params: Params, x: np.ndarray, t):
        f = self.time_features(t, x.shape[0])
        e0, c_e0 = nn.dense(f, params["temb0.w"], params["temb0.b"])
        e1, c_e1 = nn.dense(f, params["temb1.w"], params["temb1.b"])
        h0, c_c0 = nn.conv2d(x, params["conv0.w"], params["conv0.b"], stride=1, pad=1)
        h0 = h0 + e0[:, :, None, None]
        a0, c_r0 = nn.relu(h0)
        h1, c_c1 = nn.conv2d(a0, params["conv1.w"], params["conv1.b"], stride=1, pad=1)
        h1 = h1 + e1[:, :, None, None]
        a1, c_r1 = nn.relu(h1)
        out, c_c2 = nn.conv2d(a1, params["conv2.w"], params["conv2.b"], stride=1, pad=1)
        return out, (c_e0, c_e1, c_c0, c_r0, c_c1, c_r1, c_c2)

    def backward(self, params: Params, cache, dout: np.ndarray):
        c_e0, c_e1, c_c0, c_r0, c_c1, c_r1, c_c2 = cache
        grads: Params = {}
        da1, grads["conv2.w"], grads["conv2.b"] = nn.conv2d_backward(dout, c_c2)
        dh1 = nn.relu_backward(da1, c_r1)
        de1 = dh1.sum(axis=(2, 3))
        _, grads["temb1.w"], grads["temb1.b"] = nn.dense_backward(de1, c_e1)
        da0, grads["conv1.w"], grads["conv1.b"] = nn.conv2d_backward(dh1, c_c1)
        dh0 = nn.relu_backward(da0, c_r0)
        de0 = dh0.sum(axis=(2, 3))
        _, grads["temb0.w"], grads["temb0.b"] = nn.dense_backward(de0, c_e0)
        dx, grads["conv0.w"], grads["conv0.b"] = nn.conv2d_backward(dh0, c_c0)
        return grads, dx


def build_backbone(architecture: str, channels: int, image_size: int):
    if architecture == "small-conv":
        return SmallConvNet(channels, image_size)
    if architecture == "small-attention":
        patch = 8 if image_size % 8 == 0 else image_size // 4
        return PatchAttentionNet(channels, image_size, patch_size=patch)
    raise ContractError(f"unknown architecture {architecture!r}")
