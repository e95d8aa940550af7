"""Centered orthonormal FFTs, Cartesian undersampling and data consistency.

All images and k-space grids are real torch tensors of shape (..., 2, H, W):
channel 0 holds the real part, channel 1 the imaginary part. The zero
frequency of a k-space grid sits at index (H // 2, W // 2).
"""

import json
from dataclasses import dataclass

import numpy as np
import torch

_MAG_EPS2 = 1e-24  # keeps the magnitude gradient finite at exact zeros


def _check_finite(t, name):
    if not torch.isfinite(t).all():
        raise ValueError(f"{name} contains non-finite values")


def _to_complex(t):
    return torch.complex(t[..., 0, :, :], t[..., 1, :, :])


def _from_complex(c):
    return torch.stack((c.real, c.imag), dim=-3)


def fft2c(img):
    """Orthonormal centered 2-D FFT of a 2-channel image.

    Both directions carry the 1/sqrt(H*W) scaling, so Parseval holds and
    ``ifft2c`` is the exact inverse.
    """
    _check_finite(img, "image")
    c = _to_complex(img)
    c = torch.fft.ifftshift(c, dim=(-2, -1))
    k = torch.fft.fft2(c, norm="ortho")
    return _from_complex(torch.fft.fftshift(k, dim=(-2, -1)))


def ifft2c(k):
    """Inverse of :func:`fft2c`."""
    _check_finite(k, "k-space grid")
    c = _to_complex(k)
    c = torch.fft.ifftshift(c, dim=(-2, -1))
    x = torch.fft.ifft2(c, norm="ortho")
    return _from_complex(torch.fft.fftshift(x, dim=(-2, -1)))


@dataclass(frozen=True)
class SamplingMask:
    """Binary Cartesian mask: full k-space rows (phase-encode lines).

    `lines` is the sorted tuple of sampled row indices; the mask value at
    (i, j) is 1 iff i is in `lines`, for every column j.
    """

    H: int
    W: int
    rate: float
    seed: int
    lines: tuple

    def __post_init__(self):
        if not all(0 <= i < self.H for i in self.lines):
            raise ValueError("mask lines out of range")

    def to_tensor(self, dtype=torch.float32, device=None):
        """Row-indicator tensor of shape (H, 1), broadcastable over (..., 2, H, W)."""
        m = torch.zeros(self.H, 1, dtype=dtype, device=device)
        m[list(self.lines), 0] = 1
        return m

    def to_array(self):
        """Full (H, W) numpy array of 0/1."""
        m = np.zeros((self.H, self.W), dtype=np.float32)
        m[list(self.lines), :] = 1
        return m

    def to_json(self):
        return {
            "H": self.H,
            "W": self.W,
            "rate": self.rate,
            "seed": self.seed,
            "lines": sorted(self.lines),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            H=int(obj["H"]),
            W=int(obj["W"]),
            rate=float(obj["rate"]),
            seed=int(obj["seed"]),
            lines=tuple(sorted(int(i) for i in obj["lines"])),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(json.load(f))


def num_sampled_lines(H, rate):
    """Round-half-up line count for a sampling rate."""
    return int(np.floor(rate * H + 0.5))


def make_cartesian_mask(H, W, rate, seed):
    """Draw round-half-up(rate*H) distinct rows uniformly, deterministically from seed."""
    if not 0 < rate <= 1:
        raise ValueError(f"sampling rate must be in (0, 1], got {rate}")
    n = num_sampled_lines(H, rate)
    rng = np.random.default_rng(seed)
    lines = rng.choice(H, size=n, replace=False)
    return SamplingMask(H=H, W=W, rate=rate, seed=seed, lines=tuple(sorted(int(i) for i in lines)))


def _mask_tensor(mask, like):
    """Broadcastable mask tensor from a SamplingMask or an explicit tensor."""
    if isinstance(mask, SamplingMask):
        if like.shape[-2] != mask.H or like.shape[-1] != mask.W or like.shape[-3] != 2:
            raise ValueError(
                f"grid shape {tuple(like.shape[-3:])} does not match mask "
                f"({mask.H}, {mask.W})"
            )
        return mask.to_tensor(dtype=like.dtype, device=like.device)
    return mask.to(dtype=like.dtype, device=like.device)


def stack_masks(masks, dtype=torch.float32, device=None):
    """Stack per-sample masks into a (B, 1, H, 1) tensor for batched ops."""
    return torch.stack([m.to_tensor(dtype=dtype, device=device) for m in masks]).unsqueeze(1)


def undersample(k_full, mask):
    """Zero out all unsampled rows of a k-space grid."""
    return k_full * _mask_tensor(mask, k_full)


def data_consistency(k_rec, k0, mask):
    """Hard replacement: measured rows from k0, the rest from k_rec."""
    if k_rec.shape != k0.shape:
        raise ValueError(f"shape mismatch: {tuple(k_rec.shape)} vs {tuple(k0.shape)}")
    m = _mask_tensor(mask, k_rec)
    return m * k0 + (1 - m) * k_rec


def complex_magnitude(img):
    """Pointwise magnitude of a 2-channel image, kept 2-channel (imag = 0)."""
    mag2 = img[..., 0, :, :] ** 2 + img[..., 1, :, :] ** 2
    mag = torch.sqrt(mag2.clamp_min(_MAG_EPS2))
    return torch.stack((mag, torch.zeros_like(mag)), dim=-3)


def tdc(s, k0, mask):
    """Two-step data consistency.

    Replace sampled k-space rows of s with the measured ones, go back to
    image space, take the pointwise magnitude, and replace once more.
    Sampled rows of fft2c(output) equal k0.
    """
    s1 = ifft2c(data_consistency(fft2c(s), k0, mask))
    r = complex_magnitude(s1)
    return ifft2c(data_consistency(fft2c(r), k0, mask))
