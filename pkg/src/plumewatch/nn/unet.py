"""UNet assembly: parameter initialization, forward pass, analytic backward.

Layout, for depth d and base width w (channel widths double per scale):

    encoder block i: conv3x3 -> BN -> ReLU -> maxpool2x2
    decoder block i: tconv2x2(s2) -> concat skip -> conv3x3 -> BN -> ReLU
                     -> conv3x3 -> BN -> ReLU
    head: conv1x1 to a single logit plane

Skip connections join the pre-pool encoder activation of each scale to the
decoder block at the same scale. Parameters and batch-norm running statistics
live in plain name->array dicts so the optimizer and the serializer can treat
them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 16
    base_width: int = 16
    depth: int = 4
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    @property
    def widths(self) -> list[int]:
        return [self.base_width * (2 ** i) for i in range(self.depth)]

    @property
    def out_widths(self) -> list[int]:
        # decoder output channels at scale i
        return [self.widths[max(i - 1, 0)] for i in range(self.depth)]

    @property
    def pool_divisor(self) -> int:
        return 2 ** self.depth


def _conv_shapes(config: UNetConfig):
    """Ordered (name, kind, shape) for every parameter tensor."""
    w = config.widths
    out_w = config.out_widths
    shapes = []
    in_ch = config.in_channels
    for i in range(config.depth):
        shapes.append((f"enc{i}.conv.w", "conv", (w[i], in_ch, 3, 3)))
        shapes.append((f"enc{i}.conv.b", "bias", (w[i],)))
        shapes.append((f"enc{i}.bn.gamma", "gamma", (w[i],)))
        shapes.append((f"enc{i}.bn.beta", "bias", (w[i],)))
        in_ch = w[i]
    for i in reversed(range(config.depth)):
        up_in = w[config.depth - 1] if i == config.depth - 1 else out_w[i + 1]
        shapes.append((f"dec{i}.up.w", "tconv", (up_in, w[i], 2, 2)))
        shapes.append((f"dec{i}.up.b", "bias", (w[i],)))
        cat = 2 * w[i]
        shapes.append((f"dec{i}.conv1.w", "conv", (out_w[i], cat, 3, 3)))
        shapes.append((f"dec{i}.conv1.b", "bias", (out_w[i],)))
        shapes.append((f"dec{i}.bn1.gamma", "gamma", (out_w[i],)))
        shapes.append((f"dec{i}.bn1.beta", "bias", (out_w[i],)))
        shapes.append((f"dec{i}.conv2.w", "conv", (out_w[i], out_w[i], 3, 3)))
        shapes.append((f"dec{i}.conv2.b", "bias", (out_w[i],)))
        shapes.append((f"dec{i}.bn2.gamma", "gamma", (out_w[i],)))
        shapes.append((f"dec{i}.bn2.beta", "bias", (out_w[i],)))
    shapes.append(("head.w", "conv", (1, out_w[0], 1, 1)))
    shapes.append(("head.b", "bias", (1,)))
    return shapes


def param_names(config: UNetConfig) -> list[str]:
    return [name for name, _, _ in _conv_shapes(config)]


def bn_state_names(config: UNetConfig) -> list[str]:
    names = []
    for name, kind, shape in _conv_shapes(config):
        if kind == "gamma":
            stem = name.rsplit(".", 1)[0]
            names += [f"{stem}.running_mean", f"{stem}.running_var"]
    return names


def init_params(config: UNetConfig, rng: np.random.Generator, dtype=np.float32):
    """He-initialized conv weights, unit gamma, zero bias; fresh BN state."""
    params: dict[str, np.ndarray] = {}
    for name, kind, shape in _conv_shapes(config):
        if kind in ("conv", "tconv"):
            fan_in = int(np.prod(shape[1:])) if kind == "conv" else shape[0] * 4
            std = np.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
        elif kind == "gamma":
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    state = {}
    for name in bn_state_names(config):
        n_ch = params[name.rsplit(".", 1)[0] + ".gamma"].shape[0]
        state[name] = (
            np.zeros(n_ch, dtype=dtype)
            if name.endswith("mean")
            else np.ones(n_ch, dtype=dtype)
        )
    return params, state


def _bn(params, state, name, x, mode, config, caches, new_state):
    y, cache, mean, var = L.batchnorm_forward(
        x,
        params[f"{name}.gamma"], params[f"{name}.beta"],
        state[f"{name}.running_mean"], state[f"{name}.running_var"],
        mode, eps=config.bn_eps, momentum=config.bn_momentum,
    )
    caches[name] = cache
    new_state[f"{name}.running_mean"] = mean
    new_state[f"{name}.running_var"] = var
    return y


def forward(params, state, x, mode, config: UNetConfig):
    """Run the net on (N, 16, H, W); H and W must be divisible by 2**depth.

    Returns (logits, cache, new_state); the cache feeds :func:`backward` when
    ``mode == "train"``. ``new_state`` carries updated BN running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    n, c, h, w = x.shape
    div = config.pool_divisor
    if c != config.in_channels:
        raise ValueError(f"expected {config.in_channels} channels, got {c}")
    if h % div or w % div:
        raise ValueError(f"spatial dims {h}x{w} not divisible by {div}")

    caches: dict = {"config": config, "mode": mode}
    new_state: dict = {}
    skips = []
    cur = x
    for i in range(config.depth):
        y, caches[f"enc{i}.conv"] = L.conv2d_forward(
            cur, params[f"enc{i}.conv.w"], params[f"enc{i}.conv.b"], pad=1
        )
        y = _bn(params, state, f"enc{i}.bn", y, mode, config, caches, new_state)
        y, caches[f"enc{i}.relu"] = L.relu_forward(y)
        skips.append(y)
        cur, caches[f"enc{i}.pool"] = L.maxpool2x2_forward(y)

    for i in reversed(range(config.depth)):
        y, caches[f"dec{i}.up"] = L.convtranspose2x2_forward(
            cur, params[f"dec{i}.up.w"], params[f"dec{i}.up.b"]
        )
        y, caches[f"dec{i}.cat"] = L.concat_forward(y, skips[i])
        y, caches[f"dec{i}.conv1"] = L.conv2d_forward(
            y, params[f"dec{i}.conv1.w"], params[f"dec{i}.conv1.b"], pad=1
        )
        y = _bn(params, state, f"dec{i}.bn1", y, mode, config, caches, new_state)
        y, caches[f"dec{i}.relu1"] = L.relu_forward(y)
        y, caches[f"dec{i}.conv2"] = L.conv2d_forward(
            y, params[f"dec{i}.conv2.w"], params[f"dec{i}.conv2.b"], pad=1
        )
        y = _bn(params, state, f"dec{i}.bn2", y, mode, config, caches, new_state)
        y, caches[f"dec{i}.relu2"] = L.relu_forward(y)
        cur = y

    logits, caches["head"] = L.conv2d_forward(cur, params["head.w"], params["head.b"], pad=0)
    return logits[:, 0], caches, new_state


def backward(params, caches, dlogits):
    """Analytic gradients of every parameter given d(loss)/d(logits)."""
    config: UNetConfig = caches["config"]
    grads: dict[str, np.ndarray] = {}
    dy = dlogits[:, None]

    dy, grads["head.w"], grads["head.b"] = L.conv2d_backward(dy, params["head.w"], caches["head"])

    dskips = [None] * config.depth
    for i in range(config.depth):
        dy = L.relu_backward(dy, caches[f"dec{i}.relu2"])
        dy, grads[f"dec{i}.bn2.gamma"], grads[f"dec{i}.bn2.beta"] = L.batchnorm_backward(
            dy, caches[f"dec{i}.bn2"]
        )
        dy, grads[f"dec{i}.conv2.w"], grads[f"dec{i}.conv2.b"] = L.conv2d_backward(
            dy, params[f"dec{i}.conv2.w"], caches[f"dec{i}.conv2"]
        )
        dy = L.relu_backward(dy, caches[f"dec{i}.relu1"])
        dy, grads[f"dec{i}.bn1.gamma"], grads[f"dec{i}.bn1.beta"] = L.batchnorm_backward(
            dy, caches[f"dec{i}.bn1"]
        )
        dy, grads[f"dec{i}.conv1.w"], grads[f"dec{i}.conv1.b"] = L.conv2d_backward(
            dy, params[f"dec{i}.conv1.w"], caches[f"dec{i}.conv1"]
        )
        dy, dskip = L.concat_backward(dy, caches[f"dec{i}.cat"])
        dskips[i] = dskip
        dy, grads[f"dec{i}.up.w"], grads[f"dec{i}.up.b"] = L.convtranspose2x2_backward(
            dy, params[f"dec{i}.up.w"], caches[f"dec{i}.up"]
        )

    for i in reversed(range(config.depth)):
        dy = L.maxpool2x2_backward(dy, caches[f"enc{i}.pool"])
        dy = dy + dskips[i]
        dy = L.relu_backward(dy, caches[f"enc{i}.relu"])
        dy, grads[f"enc{i}.bn.gamma"], grads[f"enc{i}.bn.beta"] = L.batchnorm_backward(
            dy, caches[f"enc{i}.bn"]
        )
        dy, grads[f"enc{i}.conv.w"], grads[f"enc{i}.conv.b"] = L.conv2d_backward(
            dy, params[f"enc{i}.conv.w"], caches[f"enc{i}.conv"]
        )
    return grads
