"""The fixed two-branch enhancement network.

One branch collapses the image to a global ambient-light estimate (two 3x3
conv groups, global mean pooling, two 1x1 conv groups). The other consumes
the ambient estimate broadcast back over the image, concatenated with the
image itself, and produces a per-pixel inverse-transmission map through
three dilated 3x3 groups (rates 1, 2, 5 to avoid gridding) plus a plain
3x3 output group. Both branches use PReLU after every group except their
last; the outputs stay linear and unbounded.

The enhanced image is the formation-model reconstruction
``(image - ambient) * t_inv + ambient``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ContractViolationError
from .formation import reconstruct
from .tensor_ops import (
    ConvKernel,
    broadcast_spatial,
    broadcast_spatial_backward,
    concat_channels,
    conv2d,
    conv2d_backward,
    global_mean_pool,
    global_mean_pool_backward,
    prelu,
    prelu_backward,
    split_channels,
)


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    c_in: int
    c_out: int
    dilation: int = 1


BACKSCATTER_CONVS: tuple[ConvSpec, ...] = (
    ConvSpec(3, 3, 3),
    ConvSpec(3, 3, 3),
    ConvSpec(1, 3, 3),
    ConvSpec(1, 3, 3),
)
TRANSMISSION_CONVS: tuple[ConvSpec, ...] = (
    ConvSpec(3, 6, 8, dilation=1),
    ConvSpec(3, 8, 8, dilation=2),
    ConvSpec(3, 8, 8, dilation=5),
    ConvSpec(3, 8, 3, dilation=1),
)

INITIAL_SLOPE = 0.25

_MODULES = (("backscatter", BACKSCATTER_CONVS), ("transmission", TRANSMISSION_CONVS))


def architecture_manifest() -> list[tuple[str, tuple[int, ...], str]]:
    """Ordered (name, shape, kind) listing of every learnable array."""
    entries: list[tuple[str, tuple[int, ...], str]] = []
    for module, convs in _MODULES:
        for i, c in enumerate(convs):
            entries.append((f"{module}.conv{i}.weight", (c.kernel, c.kernel, c.c_in, c.c_out), "kernel"))
            entries.append((f"{module}.conv{i}.bias", (c.c_out,), "bias"))
            if i < len(convs) - 1:
                entries.append((f"{module}.prelu{i}.slope", (c.c_out,), "slope"))
    return entries


def expected_param_count() -> int:
    return sum(math.prod(shape) for _, shape, _ in architecture_manifest())


@dataclass
class NetworkParams:
    """All kernels, biases, and PReLU slopes of both branches."""

    backscatter_convs: list[ConvKernel]
    backscatter_slopes: list[np.ndarray]
    transmission_convs: list[ConvKernel]
    transmission_slopes: list[np.ndarray]

    def named_arrays(self) -> Iterator[tuple[str, str, np.ndarray]]:
        """Yield (name, kind, array) in the fixed manifest order."""
        for module, convs, slopes in (
            ("backscatter", self.backscatter_convs, self.backscatter_slopes),
            ("transmission", self.transmission_convs, self.transmission_slopes),
        ):
            for i, kernel in enumerate(convs):
                yield f"{module}.conv{i}.weight", "kernel", kernel.weights
                yield f"{module}.conv{i}.bias", "bias", kernel.bias
                if i < len(slopes):
                    yield f"{module}.prelu{i}.slope", "slope", slopes[i]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: arr for name, _, arr in self.named_arrays()}

    @property
    def dtype(self) -> np.dtype:
        return self.backscatter_convs[0].weights.dtype

    def param_count(self) -> int:
        return sum(arr.size for _, _, arr in self.named_arrays())

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            [k.astype(dtype) for k in self.backscatter_convs],
            [s.astype(dtype) for s in self.backscatter_slopes],
            [k.astype(dtype) for k in self.transmission_convs],
            [s.astype(dtype) for s in self.transmission_slopes],
        )

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [k.copy() for k in self.backscatter_convs],
            [s.copy() for s in self.backscatter_slopes],
            [k.copy() for k in self.transmission_convs],
            [s.copy() for s in self.transmission_slopes],
        )


def validate_params(params: NetworkParams) -> None:
    """Check every array against the fixed layer listing, naming offenders."""
    for (module, specs), convs, slopes in (
        (_MODULES[0], params.backscatter_convs, params.backscatter_slopes),
        (_MODULES[1], params.transmission_convs, params.transmission_slopes),
    ):
        if len(convs) != len(specs) or len(slopes) != len(specs) - 1:
            raise ContractViolationError(f"{module}: wrong number of layers")
        for i, (spec, kernel) in enumerate(zip(specs, convs)):
            expected = (spec.kernel, spec.kernel, spec.c_in, spec.c_out)
            if kernel.weights.shape != expected:
                raise ContractViolationError(
                    f"{module}.conv{i}.weight: expected shape {expected}, got {kernel.weights.shape}"
                )
            if kernel.dilation != spec.dilation:
                raise ContractViolationError(
                    f"{module}.conv{i}: expected dilation {spec.dilation}, got {kernel.dilation}"
                )
        for i, slope in enumerate(slopes):
            if slope.shape != (specs[i].c_out,):
                raise ContractViolationError(
                    f"{module}.prelu{i}.slope: expected shape ({specs[i].c_out},), got {slope.shape}"
                )
    if params.param_count() != expected_param_count():
        raise ContractViolationError(
            f"parameter count {params.param_count()} != expected {expected_param_count()}"
        )


def init_params(seed: int, dtype=np.float32) -> NetworkParams:
    """Deterministic initialization: He-style kernel scale for PReLU, zero biases, slopes 0.25.

    Kernel entries are drawn from N(0, 2 / ((1 + a^2) * fan_in)) with a the
    initial slope.
    """
    rng = np.random.default_rng(seed)

    def make(specs: tuple[ConvSpec, ...]) -> tuple[list[ConvKernel], list[np.ndarray]]:
        convs, slopes = [], []
        for i, c in enumerate(specs):
            fan_in = c.kernel * c.kernel * c.c_in
            std = math.sqrt(2.0 / ((1.0 + INITIAL_SLOPE**2) * fan_in))
            w = rng.normal(0.0, std, (c.kernel, c.kernel, c.c_in, c.c_out)).astype(dtype)
            convs.append(ConvKernel(w, np.zeros(c.c_out, dtype=dtype), c.dilation))
            if i < len(specs) - 1:
                slopes.append(np.full(c.c_out, INITIAL_SLOPE, dtype=dtype))
        return convs, slopes

    bs_convs, bs_slopes = make(BACKSCATTER_CONVS)
    tr_convs, tr_slopes = make(TRANSMISSION_CONVS)
    params = NetworkParams(bs_convs, bs_slopes, tr_convs, tr_slopes)
    validate_params(params)
    return params


def params_from_arrays(arrays: dict[str, np.ndarray]) -> NetworkParams:
    """Rebuild a parameter set from a manifest-keyed array dict."""
    def make(module: str, specs: tuple[ConvSpec, ...]):
        convs, slopes = [], []
        for i, c in enumerate(specs):
            convs.append(
                ConvKernel(
                    arrays[f"{module}.conv{i}.weight"],
                    arrays[f"{module}.conv{i}.bias"],
                    c.dilation,
                )
            )
            if i < len(specs) - 1:
                slopes.append(arrays[f"{module}.prelu{i}.slope"])
        return convs, slopes

    bs_convs, bs_slopes = make("backscatter", BACKSCATTER_CONVS)
    tr_convs, tr_slopes = make("transmission", TRANSMISSION_CONVS)
    params = NetworkParams(bs_convs, bs_slopes, tr_convs, tr_slopes)
    validate_params(params)
    return params


@dataclass
class ForwardCache:
    """Intermediates needed by the backward pass."""

    image: np.ndarray
    bs_conv_inputs: list[np.ndarray]
    bs_act_inputs: list[np.ndarray]
    pool_hw: tuple[int, int]
    tr_conv_inputs: list[np.ndarray]
    tr_act_inputs: list[np.ndarray]
    ambient: np.ndarray
    t_inv: np.ndarray
    reconstructed: bool


def _check_rgb(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractViolationError(f"input image must be (H, W, 3), got shape {image.shape}")


def _backscatter_forward(image: np.ndarray, params: NetworkParams):
    convs, slopes = params.backscatter_convs, params.backscatter_slopes
    c0 = conv2d(image, convs[0])
    a0 = prelu(c0, slopes[0])
    c1 = conv2d(a0, convs[1])
    a1 = prelu(c1, slopes[1])
    pooled = global_mean_pool(a1)
    c2 = conv2d(pooled, convs[2])
    a2 = prelu(c2, slopes[2])
    b = conv2d(a2, convs[3])
    return b, [image, a0, pooled, a2], [c0, c1, c2], a1.shape[:2]


def _transmission_forward(image: np.ndarray, ambient: np.ndarray, params: NetworkParams):
    h, w = image.shape[:2]
    x0 = concat_channels(broadcast_spatial(ambient, h, w), image)
    convs, slopes = params.transmission_convs, params.transmission_slopes
    c0 = conv2d(x0, convs[0])
    a0 = prelu(c0, slopes[0])
    c1 = conv2d(a0, convs[1])
    a1 = prelu(c1, slopes[1])
    c2 = conv2d(a1, convs[2])
    a2 = prelu(c2, slopes[2])
    t = conv2d(a2, convs[3])
    return t, [x0, a0, a1, a2], [c0, c1, c2]


def estimate_backscatter(image: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Global ambient-light estimate as a 1 x 1 x 3 tensor."""
    _check_rgb(image)
    image = np.asarray(image, dtype=params.dtype)
    b, *_ = _backscatter_forward(image, params)
    return b


def estimate_direct_transmission(
    image: np.ndarray, ambient: np.ndarray, params: NetworkParams
) -> np.ndarray:
    """Per-pixel inverse-transmission map (H x W x 3), unbounded."""
    _check_rgb(image)
    image = np.asarray(image, dtype=params.dtype)
    ambient = np.asarray(ambient, dtype=params.dtype).reshape(1, 1, 3)
    t, *_ = _transmission_forward(image, ambient, params)
    return t


def forward(
    image: np.ndarray, params: NetworkParams, *, apply_reconstruction: bool = True
) -> tuple[np.ndarray, ForwardCache]:
    """Full enhancement pass; returns the unclamped enhanced image and a cache.

    ``apply_reconstruction=False`` is the ablation hook: the transmission
    branch's raw 3-channel output is returned directly instead of the
    formation-model reconstruction.
    """
    _check_rgb(image)
    image = np.asarray(image, dtype=params.dtype)
    b, bs_conv_in, bs_act_in, pool_hw = _backscatter_forward(image, params)
    t, tr_conv_in, tr_act_in = _transmission_forward(image, b, params)
    enhanced = reconstruct(image, b, t) if apply_reconstruction else t
    cache = ForwardCache(
        image=image,
        bs_conv_inputs=bs_conv_in,
        bs_act_inputs=bs_act_in,
        pool_hw=pool_hw,
        tr_conv_inputs=tr_conv_in,
        tr_act_inputs=tr_act_in,
        ambient=b,
        t_inv=t,
        reconstructed=apply_reconstruction,
    )
    return enhanced, cache


def _check_cache(cache: ForwardCache, params: NetworkParams) -> None:
    pairs = list(zip(cache.bs_conv_inputs, params.backscatter_convs)) + list(
        zip(cache.tr_conv_inputs, params.transmission_convs)
    )
    for x, kernel in pairs:
        if x.shape[2] != kernel.c_in:
            raise ContractViolationError(
                f"cache/params mismatch: conv input has {x.shape[2]} channels, "
                f"kernel expects {kernel.c_in}"
            )


def backward(
    cache: ForwardCache, grad_enhanced: np.ndarray, params: NetworkParams
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter.

    The ambient-light estimate receives gradient through both of its
    consumers: the reconstruction term (1 - t_inv) and the broadcast copy
    concatenated into the transmission branch's input.
    """
    if grad_enhanced.shape != cache.t_inv.shape:
        raise ContractViolationError(
            f"grad shape {grad_enhanced.shape} does not match output {cache.t_inv.shape}"
        )
    _check_cache(cache, params)
    grads: dict[str, np.ndarray] = {}

    if cache.reconstructed:
        grad_t = grad_enhanced * (cache.image - cache.ambient)
        grad_b = (grad_enhanced * (1.0 - cache.t_inv)).sum(axis=(0, 1), keepdims=True)
    else:
        grad_t = grad_enhanced
        grad_b = np.zeros_like(cache.ambient)

    grad_x0 = _transmission_backward(cache, grad_t, params, grads)
    grad_bcast, _ = split_channels(grad_x0, 3)
    grad_b = grad_b + broadcast_spatial_backward(grad_bcast)
    _backscatter_backward(cache, grad_b, params, grads)
    return grads


def _transmission_backward(cache, grad_t, params, grads) -> np.ndarray:
    convs, slopes = params.transmission_convs, params.transmission_slopes
    conv_in, act_in = cache.tr_conv_inputs, cache.tr_act_inputs
    g = grad_t
    for i in (3, 2, 1, 0):
        g, gw, gb = conv2d_backward(conv_in[i], convs[i], g)
        grads[f"transmission.conv{i}.weight"] = gw
        grads[f"transmission.conv{i}.bias"] = gb
        if i > 0:
            g, gs = prelu_backward(act_in[i - 1], slopes[i - 1], g)
            grads[f"transmission.prelu{i - 1}.slope"] = gs
    return g


def _backscatter_backward(cache, grad_b, params, grads) -> None:
    convs, slopes = params.backscatter_convs, params.backscatter_slopes
    conv_in, act_in = cache.bs_conv_inputs, cache.bs_act_inputs
    g, gw, gb = conv2d_backward(conv_in[3], convs[3], grad_b)
    grads["backscatter.conv3.weight"] = gw
    grads["backscatter.conv3.bias"] = gb
    g, gs = prelu_backward(act_in[2], slopes[2], g)
    grads["backscatter.prelu2.slope"] = gs
    g, gw, gb = conv2d_backward(conv_in[2], convs[2], g)
    grads["backscatter.conv2.weight"] = gw
    grads["backscatter.conv2.bias"] = gb
    g = global_mean_pool_backward(cache.pool_hw, g)
    g, gs = prelu_backward(act_in[1], slopes[1], g)
    grads["backscatter.prelu1.slope"] = gs
    g, gw, gb = conv2d_backward(conv_in[1], convs[1], g)
    grads["backscatter.conv1.weight"] = gw
    grads["backscatter.conv1.bias"] = gb
    g, gs = prelu_backward(act_in[0], slopes[0], g)
    grads["backscatter.prelu0.slope"] = gs
    _, gw, gb = conv2d_backward(conv_in[0], convs[0], g)
    grads["backscatter.conv0.weight"] = gw
    grads["backscatter.conv0.bias"] = gb
