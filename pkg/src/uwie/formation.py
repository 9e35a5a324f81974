"""Physical image formation: forward degradation and its multiplicative inverse.

Underwater capture mixes an attenuated direct signal with backscattered
ambient light:

    captured = clean * t + ambient * (1 - t),        t = exp(-beta * d)

Enhancement inverts this with the inverse transmission map t_inv = exp(beta * d):

    restored = (captured - ambient) * t_inv + ambient

The restored image is intentionally not clamped; clamping to [0, 1] happens
only when an image is serialized, so training gradients are never truncated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError


def _as_ambient(b) -> np.ndarray:
    """Normalize an ambient-light value to a (1, 1, 3) array."""
    arr = np.asarray(b, dtype=np.result_type(b, np.float32))
    if arr.shape == (3,):
        arr = arr.reshape(1, 1, 3)
    if arr.shape != (1, 1, 3):
        raise ContractViolationError(f"ambient light must be a 3-vector, got shape {arr.shape}")
    return arr


def _check_image(img: np.ndarray, name: str) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractViolationError(f"{name} must be (H, W, 3), got shape {img.shape}")


@dataclass
class AttenuationSpec:
    """Per-channel attenuation coefficients (1/m) and transmission distance(s) in meters.

    ``depth`` is either a scalar or an (H, W) map.
    """

    beta: np.ndarray
    depth: float | np.ndarray

    def __post_init__(self) -> None:
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.shape != (3,):
            raise ContractViolationError(f"beta must be a 3-vector, got shape {self.beta.shape}")
        if np.any(self.beta < 0):
            raise ContractViolationError(f"beta must be >= 0, got {self.beta}")
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim not in (0, 2):
            raise ContractViolationError(f"depth must be a scalar or (H, W) map, got shape {d.shape}")
        if np.any(d < 0):
            raise ContractViolationError("depth must be >= 0")
        self.depth = d


def transmission_from_depth(spec: AttenuationSpec, size: tuple[int, int] | None = None) -> np.ndarray:
    """Per-channel transmission map t_c(x) = exp(-beta_c * d(x)), entries in (0, 1].

    ``size`` gives the (H, W) of the output when ``spec.depth`` is a scalar;
    with a depth map it must match the map if supplied.
    """
    if np.any(spec.beta < 0) or np.any(np.asarray(spec.depth) < 0):
        raise ContractViolationError("beta and depth must be >= 0")
    d = spec.depth
    if d.ndim == 0:
        if size is None:
            raise ContractViolationError("size=(H, W) is required for a scalar depth")
        d = np.full(size, float(d))
    elif size is not None and d.shape != tuple(size):
        raise ContractViolationError(f"depth map shape {d.shape} does not match size {size}")
    return np.exp(-spec.beta[None, None, :] * d[:, :, None])


def degrade(d_img: np.ndarray, b, t) -> np.ndarray:
    """Apply the forward formation model: I = D * t + B * (1 - t), with t in (0, 1]."""
    _check_image(d_img, "clean image")
    ambient = _as_ambient(b)
    t_arr = np.asarray(t)
    if np.any(t_arr <= 0) or np.any(t_arr > 1):
        raise ContractViolationError("transmission values must lie in (0, 1]")
    try:
        t_arr = np.broadcast_to(t_arr, d_img.shape)
    except ValueError:
        raise ContractViolationError(
            f"transmission shape {np.asarray(t).shape} does not broadcast to {d_img.shape}"
        ) from None
    return d_img * t_arr + ambient * (1.0 - t_arr)


def reconstruct(i: np.ndarray, b, t_inv) -> np.ndarray:
    """Invert the formation model: D = (I - B) * t_inv + B. Output is not clamped."""
    _check_image(i, "captured image")
    ambient = _as_ambient(b)
    try:
        t_arr = np.broadcast_to(np.asarray(t_inv), i.shape)
    except ValueError:
        raise ContractViolationError(
            f"inverse-transmission shape {np.asarray(t_inv).shape} does not broadcast to {i.shape}"
        ) from None
    return (i - ambient) * t_arr + ambient
