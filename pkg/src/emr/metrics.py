"""PSNR and SSIM on magnitude images, with per-fold aggregation."""

import numpy as np
import torch
from scipy.signal import convolve2d

PSNR_CAP_DB = 100.0

# SSIM constants (standard values), 11x11 Gaussian window, sigma 1.5.
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5


def magnitude(img):
    """Pointwise magnitude of a (..., 2, H, W) complex image, as numpy."""
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    img = np.asarray(img)
    return np.sqrt(img[..., 0, :, :] ** 2 + img[..., 1, :, :] ** 2)


def normalize_pair(ref, rec):
    """Divide both images by the reference maximum (metric convention)."""
    peak = float(np.max(ref))
    if peak <= 0:
        raise ValueError("reference image has no positive values")
    return ref / peak, rec / peak


def psnr(ref, rec, cap=PSNR_CAP_DB):
    """PSNR in dB against a [0, 1] reference, peak value 1.0.

    Identical images return `cap` (infinite PSNR is reported capped so
    aggregates stay finite).
    """
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    mse = np.mean((ref - rec) ** 2)
    if mse == 0:
        return cap
    value = 10.0 * np.log10(1.0 / mse)
    return min(value, cap)


def _gaussian_window(size=_SSIM_WIN, sigma=_SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _filter2(img, w):
    # separable Gaussian, valid region only (window fully inside the image)
    tmp = convolve2d(img, w[:, None], mode="valid")
    return convolve2d(tmp, w[None, :], mode="valid")


def ssim(ref, rec):
    """Mean local SSIM with an 11x11 Gaussian window, dynamic range 1.0."""
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    if min(ref.shape) < _SSIM_WIN:
        raise ValueError(f"image smaller than the {_SSIM_WIN}x{_SSIM_WIN} SSIM window")
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    w = _gaussian_window()
    mu_x = _filter2(ref, w)
    mu_y = _filter2(rec, w)
    sxx = _filter2(ref * ref, w) - mu_x ** 2
    syy = _filter2(rec * rec, w) - mu_y ** 2
    sxy = _filter2(ref * rec, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def image_metrics(ref_img, rec_img):
    """PSNR/SSIM between two 2-channel images on normalized magnitudes."""
    ref = magnitude(ref_img)
    rec = magnitude(rec_img)
    ref, rec = normalize_pair(ref, rec)
    return {"psnr": float(psnr(ref, rec)), "ssim": float(ssim(ref, rec))}


def mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def aggregate_folds(per_fold):
    """Fold-level means combined into mean +/- std across folds.

    `per_fold` is a list (one entry per fold) of per-image metric dicts.
    """
    report = {}
    for key in ("psnr", "ssim"):
        fold_means = [mean_std([m[key] for m in fold])[0] for fold in per_fold]
        mean, std = mean_std(fold_means)
        report[key] = {
            "per_fold": fold_means,
            "mean": mean,
            "std": std,
        }
    return report
