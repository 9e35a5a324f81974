"""Dense H x W x C tensor primitives with hand-derived gradients.

A "tensor" here is a plain numpy array of shape (height, width, channels).
Production code runs at float32; gradient checking runs the same code path
at float64. Every forward op has a matching ``*_backward`` returning the
analytic gradients, so no autodiff machinery is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError


def _require_hwc(x: np.ndarray, name: str) -> None:
    if x.ndim != 3:
        raise ContractViolationError(f"{name} must be a (H, W, C) array, got shape {x.shape}")


@dataclass
class ConvKernel:
    """Convolution parameters: weights (k, k, c_in, c_out), bias (c_out,), dilation rate."""

    weights: np.ndarray
    bias: np.ndarray
    dilation: int = 1

    def __post_init__(self) -> None:
        w = self.weights
        if w.ndim != 4 or w.shape[0] != w.shape[1]:
            raise ContractViolationError(f"weights must be (k, k, c_in, c_out), got {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ContractViolationError(f"kernel size must be odd, got {w.shape[0]}")
        if self.bias.shape != (w.shape[3],):
            raise ContractViolationError(
                f"bias must have shape ({w.shape[3]},), got {self.bias.shape}"
            )
        if int(self.dilation) < 1:
            raise ContractViolationError(f"dilation must be >= 1, got {self.dilation}")
        if self.dilation > 1 and w.shape[0] == 1:
            raise ContractViolationError("dilation > 1 requires a 3x3 kernel")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[2]

    @property
    def c_out(self) -> int:
        return self.weights.shape[3]

    @property
    def padding(self) -> int:
        """Zero-fill amount that keeps the spatial size unchanged."""
        return self.dilation * (self.size - 1) // 2

    def astype(self, dtype) -> "ConvKernel":
        return ConvKernel(self.weights.astype(dtype), self.bias.astype(dtype), self.dilation)

    def copy(self) -> "ConvKernel":
        return ConvKernel(self.weights.copy(), self.bias.copy(), self.dilation)


def conv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Same-padding 2-D convolution with optional dilation.

    out[y, x, o] = bias[o] + sum_{i, j, c} w[i, j, c, o] * padded[y + d*i, x + d*j, c]
    where the zero padding equals ``dilation * (k - 1) / 2`` on each side, so the
    output keeps the input's spatial size.
    """
    _require_hwc(x, "conv input")
    if kernel.dilation < 1:
        raise ContractViolationError(f"dilation must be >= 1, got {kernel.dilation}")
    if x.shape[2] != kernel.c_in:
        raise ContractViolationError(
            f"input has {x.shape[2]} channels, kernel expects {kernel.c_in}"
        )
    h, w = x.shape[:2]
    k, d, p = kernel.size, kernel.dilation, kernel.padding
    padded = np.pad(x, ((p, p), (p, p), (0, 0))) if p else x
    out = np.zeros((h, w, kernel.c_out), dtype=np.result_type(x, kernel.weights))
    for i in range(k):
        for j in range(k):
            tap = padded[i * d : i * d + h, j * d : j * d + w, :]
            out += np.tensordot(tap, kernel.weights[i, j], axes=([2], [0]))
    out += kernel.bias
    return out


def conv2d_backward(
    x: np.ndarray, kernel: ConvKernel, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a scalar loss through :func:`conv2d`.

    Returns ``(grad_x, grad_weights, grad_bias)`` for upstream gradient
    ``grad_out`` of the same shape as the conv output.
    """
    if grad_out.shape != (x.shape[0], x.shape[1], kernel.c_out):
        raise ContractViolationError(
            f"grad shape {grad_out.shape} does not match conv output "
            f"{(x.shape[0], x.shape[1], kernel.c_out)}"
        )
    h, w = x.shape[:2]
    k, d, p = kernel.size, kernel.dilation, kernel.padding
    padded = np.pad(x, ((p, p), (p, p), (0, 0))) if p else x
    grad_w = np.zeros_like(kernel.weights)
    grad_padded = np.zeros_like(padded)
    for i in range(k):
        for j in range(k):
            tap = padded[i * d : i * d + h, j * d : j * d + w, :]
            grad_w[i, j] = np.tensordot(tap, grad_out, axes=([0, 1], [0, 1]))
            grad_padded[i * d : i * d + h, j * d : j * d + w, :] += np.tensordot(
                grad_out, kernel.weights[i, j], axes=([2], [1])
            )
    grad_x = grad_padded[p : p + h, p : p + w, :] if p else grad_padded
    grad_bias = grad_out.sum(axis=(0, 1))
    return np.ascontiguousarray(grad_x), grad_w, grad_bias


def prelu(x: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Rectifier with a learnable per-channel negative slope: x if x >= 0 else slope_c * x."""
    _require_hwc(x, "prelu input")
    if slopes.shape != (x.shape[2],):
        raise ContractViolationError(
            f"slopes must have shape ({x.shape[2]},), got {slopes.shape}"
        )
    return np.where(x >= 0, x, x * slopes)


def prelu_backward(
    x: np.ndarray, slopes: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients through :func:`prelu`; the subgradient at 0 uses the identity branch."""
    neg = x < 0
    grad_x = np.where(neg, grad_out * slopes, grad_out)
    grad_slopes = np.where(neg, grad_out * x, 0.0).sum(axis=(0, 1))
    return grad_x, grad_slopes.astype(slopes.dtype, copy=False)


def global_mean_pool(x: np.ndarray) -> np.ndarray:
    """Average over all spatial positions, keeping a 1 x 1 x C shape."""
    _require_hwc(x, "pool input")
    return x.mean(axis=(0, 1), keepdims=True)


def global_mean_pool_backward(hw: tuple[int, int], grad_out: np.ndarray) -> np.ndarray:
    """Each input element receives upstream[c] / (H * W)."""
    h, w = hw
    return np.broadcast_to(grad_out / (h * w), (h, w, grad_out.shape[2])).copy()


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack two tensors along the channel axis; a's channels come first."""
    _require_hwc(a, "concat lhs")
    _require_hwc(b, "concat rhs")
    if a.shape[:2] != b.shape[:2]:
        raise ContractViolationError(
            f"spatial dims differ: {a.shape[:2]} vs {b.shape[:2]}"
        )
    return np.concatenate([a, b], axis=2)


def split_channels(x: np.ndarray, c_first: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`concat_channels`; routes an upstream gradient to each operand."""
    _require_hwc(x, "split input")
    return x[:, :, :c_first], x[:, :, c_first:]


def broadcast_spatial(b: np.ndarray, h: int, w: int) -> np.ndarray:
    """Repeat a 1 x 1 x C vector over an H x W grid."""
    if b.ndim != 3 or b.shape[:2] != (1, 1):
        raise ContractViolationError(f"expected a (1, 1, C) tensor, got shape {b.shape}")
    if h < 1 or w < 1:
        raise ContractViolationError(f"target dims must be >= 1, got {(h, w)}")
    return np.broadcast_to(b, (h, w, b.shape[2])).copy()


def broadcast_spatial_backward(grad_out: np.ndarray) -> np.ndarray:
    """Sum the upstream gradient over all spatial positions, per channel."""
    return grad_out.sum(axis=(0, 1), keepdims=True)
