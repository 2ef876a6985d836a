"""Accuracy, PSNR and SSIM, plus a small evaluation driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

INFINITE_PSNR = math.inf


def accuracy(model, dataset) -> float:
    if len(dataset) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(model.predict(dataset.X) == dataset.y))


def psnr(original, perturbed, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)`` in dB; identical inputs give ``INFINITE_PSNR``."""
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(perturbed, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return INFINITE_PSNR
    return 10.0 * math.log10(peak**2 / mse)


def _as_square(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        side = math.isqrt(x.size)
        if side * side != x.size:
            raise ValueError(f"{x.size} elements do not form a square image")
        x = x.reshape(side, side)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {x.shape}")
    return x


def ssim(original, perturbed, window: int = 8, c1: float | None = None, c2: float | None = None, peak: float = 1.0) -> float:
    """Mean SSIM over all ``window x window`` patches (stride 1, uniform weights).

    Patch statistics use population (1/N) moments. ``c1``/``c2`` default to
    ``(0.01 peak)^2`` and ``(0.03 peak)^2``.
    """
    a, b = _as_square(original), _as_square(perturbed)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} is smaller than the {window}x{window} window")
    c1 = (0.01 * peak) ** 2 if c1 is None else c1
    c2 = (0.03 * peak) ** 2 if c2 is None else c2
    pa = sliding_window_view(a, (window, window))
    pb = sliding_window_view(b, (window, window))
    mu_a = pa.mean(axis=(-1, -2))
    mu_b = pb.mean(axis=(-1, -2))
    da = pa - mu_a[..., None, None]
    db = pb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-1, -2))
    var_b = (db * db).mean(axis=(-1, -2))
    cov = (da * db).mean(axis=(-1, -2))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def mean_finite(values) -> float:
    """Mean over finite entries (identical pairs report infinite PSNR)."""
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class EvalReport:
    clean_accuracy: float
    robust_accuracy: dict[str, float] = field(default_factory=dict)
    mean_psnr: dict[str, float] = field(default_factory=dict)
    mean_ssim: dict[str, float] = field(default_factory=dict)
    n_examples: int = 0

    def to_dict(self) -> dict:
        return {
            "clean_accuracy": self.clean_accuracy,
            "robust_accuracy": dict(self.robust_accuracy),
            "mean_psnr": dict(self.mean_psnr),
            "mean_ssim": dict(self.mean_ssim),
            "n_examples": self.n_examples,
        }


def image_quality(X, X_adv, mask=None) -> tuple[float, float]:
    """Mean PSNR and SSIM over the rows selected by ``mask`` (all rows if None)."""
    rows = np.arange(len(X)) if mask is None else np.flatnonzero(mask)
    if rows.size == 0:
        return float("nan"), float("nan")
    ps = [psnr(X[i], X_adv[i]) for i in rows]
    ss = [ssim(X[i], X_adv[i]) for i in rows]
    return mean_finite(ps), float(np.mean(ss))


def evaluate(model, dataset, attacks: dict) -> EvalReport:
    """``attacks`` maps a name to a callable ``(model, X, Y) -> X_adv``.

    PSNR/SSIM are averaged over the successful adversarial examples only.
    """
    report = EvalReport(accuracy(model, dataset), n_examples=len(dataset))
    for name, attack in attacks.items():
        X_adv = attack(model, dataset.X, dataset.y)
        pred = model.predict(X_adv)
        report.robust_accuracy[name] = float(np.mean(pred == dataset.y))
        success = pred != dataset.y
        report.mean_psnr[name], report.mean_ssim[name] = image_quality(dataset.X, X_adv, success)
    return report
