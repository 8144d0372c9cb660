"""Quantitative evaluation: FID, KID, SSIM, PSNR, Welch t, rating summaries.

Feature-based scores (FID/KID) use a pluggable extractor; the default is a
fixed-seed random-weight convolutional embedder, so values are comparable
only between reports carrying the same extractor_id. KID is reported as the
raw unbiased estimator (no x100 scaling). The Frechet matrix square root
goes through an eigendecomposition of the symmetrized product with negative
eigenvalues clipped at the -1e-8 tolerance, the classic guard against PSD
drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, special

from .errors import ValidationError

PSD_TOL = 1e-8


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray  # (n, d) float64
    extractor_id: str
    source: str  # "real" | "generated"

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValidationError(f"features must be (n, d), got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")


@dataclass(frozen=True)
class MetricReport:
    fid: float
    kid: float
    ssim_mean: float
    psnr_mean: float
    n_real: int
    n_gen: int
    extractor_id: str

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("fid", "kid", "ssim_mean", "psnr_mean", "n_real", "n_gen", "extractor_id")}
        if math.isinf(d["psnr_mean"]):
            d["psnr_mean"] = "inf"
        return d


@dataclass(frozen=True)
class ScoreSummary:
    group: str
    mean: float
    std: float
    min: float
    max: float
    median: float
    n: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("group", "mean", "std", "min", "max", "median", "n")}


class RandomConvExtractor:
    """Seeded random-weight conv embedder; d=64 by default, never trained."""

    def __init__(self, d: int = 64, seed: int = 0, n_layers: int = 3, width: int = 16):
        self.d = d
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.kernels = []
        ch = 3
        for i in range(n_layers):
            out = width * (2 ** i)
            k = rng.standard_normal((out, ch, 3, 3)) * np.sqrt(2.0 / (ch * 9))
            self.kernels.append(k.astype(np.float64))
            ch = out
        self.proj = (rng.standard_normal((ch, d)) / np.sqrt(ch)).astype(np.float64)
        self.extractor_id = f"randconv-d{d}-seed{seed}"

    def __call__(self, images: np.ndarray) -> np.ndarray:
        import torch
        import torch.nn.functional as F

        x = torch.as_tensor(images, dtype=torch.float64).permute(0, 3, 1, 2)
        with torch.no_grad():
            for k in self.kernels:
                x = F.conv2d(x, torch.as_tensor(k), stride=2, padding=1)
                x = F.silu(x)
            pooled = x.mean(dim=(2, 3)).numpy()
        return pooled @ self.proj


def _normalize_images(images) -> np.ndarray:
    arr = np.stack([np.asarray(im) for im in images])
    if arr.ndim == 3:
        arr = arr[..., None].repeat(3, axis=-1)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 127.5 - 1.0
    return arr.astype(np.float64)


def extract_features(images: Sequence[np.ndarray], extractor, source: str = "generated") -> FeatureSet:
    if len(images) == 0:
        raise ValidationError("need at least one image")
    shapes = {np.asarray(im).shape for im in images}
    if len(shapes) != 1:
        raise ValidationError(f"mixed image sizes: {sorted(shapes)}")
    feats = extractor(_normalize_images(images))
    return FeatureSet(features=np.asarray(feats, dtype=np.float64),
                      extractor_id=getattr(extractor, "extractor_id", "custom"),
                      source=source)


def _check_cov(S: np.ndarray, name: str) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"{name} must be square, got {S.shape}")
    if np.max(np.abs(S - S.T)) > 1e-8:
        raise ValidationError(f"{name} is not symmetric")
    return (S + S.T) / 2.0


def _psd_sqrt(S: np.ndarray, name: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(S)
    if vals.min() < -PSD_TOL * max(1.0, abs(vals.max())):
        raise ValidationError(f"{name} has eigenvalue {vals.min():.3e} below PSD tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(mu1, S1, mu2, S2) -> float:
    """||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)) for Gaussian fits."""
    mu1 = np.asarray(mu1, dtype=np.float64).ravel()
    mu2 = np.asarray(mu2, dtype=np.float64).ravel()
    if mu1.shape != mu2.shape:
        raise ValidationError(f"mean shapes differ: {mu1.shape} vs {mu2.shape}")
    S1 = _check_cov(S1, "S1")
    S2 = _check_cov(S2, "S2")
    root1 = _psd_sqrt(S1, "S1")
    inner = _check_cov(root1 @ S2 @ root1, "S1^1/2 S2 S1^1/2")
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < -PSD_TOL * max(1.0, abs(vals.max())):
        raise ValidationError("cross term lost positive semidefiniteness")
    trace_sqrt = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    fd = float(np.sum((mu1 - mu2) ** 2) + np.trace(S1) + np.trace(S2) - 2.0 * trace_sqrt)
    return max(fd, 0.0) if fd > -1e-6 else fd


def gaussian_fit(features: np.ndarray):
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValidationError("need n >= 2 samples for moment estimation")
    return X.mean(axis=0), np.cov(X, rowvar=False)


def fid(feats_real: FeatureSet, feats_gen: FeatureSet) -> float:
    if feats_real.extractor_id != feats_gen.extractor_id:
        raise ValidationError(
            f"extractor mismatch: {feats_real.extractor_id} vs {feats_gen.extractor_id}")
    mu1, S1 = gaussian_fit(feats_real.features)
    mu2, S2 = gaussian_fit(feats_gen.features)
    return frechet_distance(mu1, S1, mu2, S2)


def polynomial_kernel(x: np.ndarray, y: np.ndarray, degree: int = 3) -> np.ndarray:
    d = x.shape[-1]
    return (x @ y.T / d + 1.0) ** degree


def kid(feats_x, feats_y, kernel_degree: int = 3) -> float:
    """Unbiased MMD^2 with the polynomial kernel (x.y/d + 1)^degree."""
    X = feats_x.features if isinstance(feats_x, FeatureSet) else np.asarray(feats_x, dtype=np.float64)
    Y = feats_y.features if isinstance(feats_y, FeatureSet) else np.asarray(feats_y, dtype=np.float64)
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise ValidationError(f"KID needs n >= 2 per set, got ({m}, {n})")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError("feature dims differ")
    Kxx = polynomial_kernel(X, X, kernel_degree)
    Kyy = polynomial_kernel(Y, Y, kernel_degree)
    Kxy = polynomial_kernel(X, Y, kernel_degree)
    sum_xx = (Kxx.sum() - np.trace(Kxx)) / (m * (m - 1))
    sum_yy = (Kyy.sum() - np.trace(Kyy)) / (n * (n - 1))
    return float(sum_xx + sum_yy - 2.0 * Kxy.mean())


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _local_mean(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    num = ndimage.correlate(x, w, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones_like(x), w, mode="constant", cval=0.0)
    return num / den


def ssim(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5,
         data_range: float = 1.0) -> float:
    """Gaussian-window SSIM with C1=(0.01 L)^2, C2=(0.03 L)^2.

    Window weights renormalize at the borders; 3-channel inputs average the
    per-channel scores.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 3:
        return float(np.mean([ssim(x[..., c], y[..., c], window, sigma, data_range)
                              for c in range(x.shape[-1])]))
    if x.ndim != 2:
        raise ValidationError(f"expected HW or HWC image, got shape {x.shape}")
    C1 = (0.01 * data_range) ** 2
    C2 = (0.03 * data_range) ** 2
    w = _gaussian_window(window, sigma)
    mu_x = _local_mean(x, w)
    mu_y = _local_mean(y, w)
    xx = _local_mean(x * x, w) - mu_x * mu_x
    yy = _local_mean(y * y, w) - mu_y * mu_y
    xy = _local_mean(x * y, w) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + C1) / (mu_x ** 2 + mu_y ** 2 + C1)
    cs = (2.0 * xy + C2) / (xx + yy + C2)
    return float(np.mean(lum * cs))


def psnr(x: np.ndarray, y: np.ndarray, max_val: float = 1.0) -> float:
    """10 log10(max_val^2 / MSE) in dB; identical inputs give +inf."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / mse)


def welch_t(a, b) -> tuple[float, float, float]:
    """Welch's unequal-variance t statistic, Welch-Satterthwaite df, and the
    two-sided p from the Student-t CDF."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValidationError(f"each group needs >= 2 scores, got ({na}, {nb})")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return 0.0, float(na + nb - 2), 1.0
        raise ValidationError("zero variance in both groups with unequal means")
    se2 = va / na + vb / nb
    t = float(diff / math.sqrt(se2))
    denom = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    # denom can underflow to 0 for near-constant groups; the limit is inf df
    df = float(se2 ** 2 / denom) if denom > 0.0 else math.inf
    p = float(2.0 * special.stdtr(df, -abs(t)))
    return t, df, p


def score_summary(ratings) -> dict:
    """Per-group rating summaries plus the Welch t-test between groups.

    `ratings` is an iterable of (group, score) pairs or mappings with
    "group"/"score" keys; both groups ("real", "generated") must be present
    with at least two scores each.
    """
    groups: dict[str, list[float]] = {"real": [], "generated": []}
    for item in ratings:
        if isinstance(item, dict):
            group, score = item["group"], item["score"]
        else:
            group, score = item
        if group not in groups:
            raise ValidationError(f"unknown group {group!r}")
        groups[group].append(float(score))
    for name, scores in groups.items():
        if len(scores) < 2:
            raise ValidationError(f"group {name!r} needs >= 2 ratings, got {len(scores)}")

    def summarize(name, scores):
        arr = np.asarray(scores)
        return ScoreSummary(group=name, mean=float(arr.mean()),
                            std=float(arr.std(ddof=1)), min=float(arr.min()),
                            max=float(arr.max()), median=float(np.median(arr)),
                            n=len(arr))

    t, df, p = welch_t(groups["real"], groups["generated"])
    return {
        "real": summarize("real", groups["real"]),
        "generated": summarize("generated", groups["generated"]),
        "welch_t": {"t": t, "df": df, "p": p},
    }


def metric_report(real_images, gen_images, extractor=None,
                  pair_count: Optional[int] = None) -> MetricReport:
    """Full Table-1-style report; SSIM/PSNR pair images by index."""
    extractor = extractor or RandomConvExtractor()
    fr = extract_features(real_images, extractor, source="real")
    fg = extract_features(gen_images, extractor, source="generated")
    fid_val = fid(fr, fg)
    kid_val = kid(fr, fg)
    k = pair_count or min(len(real_images), len(gen_images))
    reals = _normalize_images(real_images[:k])
    gens = _normalize_images(gen_images[:k])
    ssims = [ssim(reals[i], gens[i], data_range=2.0) for i in range(k)]
    psnrs = [psnr(reals[i], gens[i], max_val=2.0) for i in range(k)]
    return MetricReport(fid=fid_val, kid=kid_val,
                        ssim_mean=float(np.mean(ssims)),
                        psnr_mean=float(np.mean(psnrs)) if all(map(math.isfinite, psnrs)) else math.inf,
                        n_real=len(real_images), n_gen=len(gen_images),
                        extractor_id=fr.extractor_id)


def render_metric_table(report: MetricReport) -> str:
    psnr_s = "inf" if math.isinf(report.psnr_mean) else f"{report.psnr_mean:.3f}"
    rows = [
        "Method | FID v | KID v | SSIM ^ | PSNR ^",
        "-------|-------|-------|--------|-------",
        f"ours   | {report.fid:.3f} | {report.kid:.3f} | {report.ssim_mean:.3f} | {psnr_s}",
    ]
    return "\n".join(rows) + f"\n(extractor: {report.extractor_id}, n_real={report.n_real}, n_gen={report.n_gen})"


def render_score_table(summary: dict) -> str:
    head = "Group | mean ± std | Min | Max | Median | t-test"
    sep = "------|------------|-----|-----|--------|-------"
    real, gen, wt = summary["real"], summary["generated"], summary["welch_t"]
    rows = [
        head, sep,
        f"Real      | {real.mean:.2f} ± {real.std:.2f} | {real.min:g} | {real.max:g} | {real.median:g} | -",
        f"Generated | {gen.mean:.2f} ± {gen.std:.2f} | {gen.min:g} | {gen.max:g} | {gen.median:g} | {wt['t']:.3f}",
        f"(p = {wt['p']:.4g}, df = {wt['df']:.1f})",
    ]
    return "\n".join(rows)
