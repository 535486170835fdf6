"""End-to-end SCTR: mask, guide, superpixels, patch-wise ALTF fitting, assembly.

Training is full batch by default: every iteration evaluates all patches,
sums the squared error over every observed coordinate inside every patch box
and divides by the number of such terms. A coordinate inside two
overlapping boxes contributes to both losses but is written back only by the
patch whose membership mask owns it.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .errors import NumericalError
from .guide import GuideResult, check_mask, guide_to_feature_image, strided_guide
from .metrics import MetricReport, evaluate
from .model import AltfModel, BackboneConfig, FreeFactorModel, estimate_iteration_cost
from .optim import Adam, ScheduleState, cosine_lr
from .superpixel import Patch, RankPolicy, extract_patches, single_patch, slic_segment
from .tensor import as_tensor3

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_superpixel", "no_altf", "neither")
DOWNSAMPLE_CHOICES = ((1, 1, 1), (1, 2, 1), (2, 2, 1))
# Iteration counts used for the three data modalities.
MODALITY_ITERATIONS = {"msi": 16000, "video": 4000, "color": 3000}

_RANGES = {
    "lr_base": (5e-5, 5e-3),
    "weight_decay": (0.5, 3.0),
    "omega0": (1.0, 5.0),
}


@dataclass
class TrainConfig:
    lr_base: float = 1e-3
    lr_min: float = 0.0
    weight_decay: float = 0.5
    omega0: float = 3.0
    downsample: tuple[int, int, int] = (1, 1, 1)
    iterations: int = 3000
    k_target: int = 32
    compactness: float = 10.0
    seed: int = 0
    sampling_rate: float = 0.2
    # backbone
    width: int = 256
    residual_blocks: int = 4
    attention: bool = True
    # per-patch ranks
    rank_energy: float = 0.99
    rank_max: int = 16
    fixed_ranks: tuple[int, int, int] | None = None
    # guide and segmentation
    guide_rho: float = 1e-2
    guide_max_iters: int = 300
    guide_tol: float = 1e-5
    feature_mode: str = "auto"
    feature_scale: float = 100.0
    slic_iters: int = 10
    # training loop
    reimpose_observed: bool = True
    minibatch_patches: int = 0
    threads: int = 1
    force: bool = False

    def __post_init__(self):
        self.downsample = tuple(int(d) for d in self.downsample)
        if self.fixed_ranks is not None:
            self.fixed_ranks = tuple(int(r) for r in self.fixed_ranks)

    def validate(self) -> "TrainConfig":
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError(f"sampling_rate must be in (0, 1], got {self.sampling_rate}")
        if self.k_target < 1:
            raise ValueError("k_target must be >= 1")
        if self.lr_min < 0 or self.lr_min > self.lr_base:
            raise ValueError("lr_min must be in [0, lr_base]")
        if self.feature_mode not in ("auto", "gray_mean", "pca3", "lab"):
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if len(self.downsample) != 3 or min(self.downsample) < 1:
            raise ValueError(f"invalid downsample {self.downsample}")
        if self.force:
            return self
        for name, (lo, hi) in _RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]; set force=True to override")
        if self.downsample not in DOWNSAMPLE_CHOICES:
            raise ValueError(f"downsample {self.downsample} not in {DOWNSAMPLE_CHOICES}; set force=True to override")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["downsample"] = list(self.downsample)
        if self.fixed_ranks is not None:
            d["fixed_ranks"] = list(self.fixed_ranks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @property
    def backbone(self) -> BackboneConfig:
        return BackboneConfig(width=self.width, residual_blocks=self.residual_blocks,
                              omega0=self.omega0, attention=self.attention)

    @property
    def rank_policy(self) -> RankPolicy:
        return RankPolicy(self.rank_energy, self.rank_max, self.fixed_ranks)


@dataclass
class RunResult:
    reconstruction: np.ndarray
    metrics: MetricReport
    loss_curve: list[float]
    config_echo: TrainConfig
    wall_time_s: float
    variant: str = "full"
    labels: np.ndarray | None = None
    patches: list[Patch] = field(default_factory=list, repr=False)
    guide: GuideResult | None = field(default=None, repr=False)
    model: object = field(default=None, repr=False)
    optimizer: Adam | None = field(default=None, repr=False)
    iteration_cost: int = 0

    @property
    def patch_count(self) -> int:
        return len(self.patches)

    def loss_curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(self.loss_curve):
            w.writerow([i, repr(v)])
        return buf.getvalue()


def make_mask(shape, sampling_rate: float, seed: int = 0) -> np.ndarray:
    """Uniformly random mask with exactly round(rate * size) observed entries."""
    if not 0 < sampling_rate <= 1:
        raise ValueError(f"sampling_rate must be in (0, 1], got {sampling_rate}")
    shape = tuple(int(s) for s in shape)
    size = math.prod(shape)
    count = round(sampling_rate * size)
    if count < 1:
        raise ValueError(f"sampling rate {sampling_rate} observes no entries of a {shape} tensor")
    flat = np.zeros(size, dtype=bool)
    flat[np.random.default_rng(seed).permutation(size)[:count]] = True
    return flat.reshape(shape)


# ----------------------------------------------------------------- pipeline


def compute_guide(data, mask, cfg: TrainConfig) -> GuideResult:
    observed = np.where(mask, data, 0.0)
    return strided_guide(observed, mask, rho=cfg.guide_rho, max_iters=cfg.guide_max_iters, tol=cfg.guide_tol)


def feature_image(guide: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Feature image for SLIC, on a scale where compactness ~10 is meaningful."""
    mode = cfg.feature_mode
    if mode == "auto":
        mode = "lab" if guide.shape[2] == 3 else "gray_mean"
    if mode == "lab":
        from skimage.color import rgb2lab

        return rgb2lab(np.clip(guide, 0.0, 1.0))
    # [0, 1] features are stretched to the 0..100 range of CIELAB lightness.
    return guide_to_feature_image(guide, mode).image * cfg.feature_scale


def segment(guide: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return slic_segment(feature_image(guide, cfg), cfg.k_target, cfg.compactness,
                        max_iters=cfg.slic_iters, seed=cfg.seed)


def _guide_full_depth(guide: GuideResult, depth: int) -> np.ndarray:
    g = guide.guide
    if guide.axis3_stride == 1:
        return g
    # Skipped slices reuse the preceding strided slice; only rank estimation sees this.
    idx = np.minimum(np.arange(depth) // guide.axis3_stride, g.shape[2] - 1)
    return g[:, :, idx]


def build_patches(data, mask, guide: GuideResult, cfg: TrainConfig, superpixels: bool = True):
    g = _guide_full_depth(guide, data.shape[2])
    if superpixels:
        labels = segment(guide.guide, cfg)
        return labels, extract_patches(labels, data, mask, g, cfg.rank_policy)
    labels = np.zeros(data.shape[:2], dtype=np.int64)
    return labels, single_patch(data, mask, g, cfg.rank_policy)


def assemble(patches: list[Patch], outputs: dict[int, np.ndarray], shape) -> np.ndarray:
    """Write each patch's member pixels (all of axis 3) into a full tensor."""
    out = np.zeros(shape, dtype=np.float64)
    written = np.zeros(shape[:2], dtype=np.int64)
    for p in patches:
        r0, r1, c0, c1 = p.spec.bbox
        mem = p.spec.membership
        out[r0:r1, c0:c1][mem] = outputs[p.label][mem]
        written[r0:r1, c0:c1] += mem
    if not np.all(written == 1):
        raise RuntimeError("patch memberships do not partition the image")
    return out


def _fit(model, patches: list[Patch], cfg: TrainConfig, dtype):
    params = model.parameters()
    opt = Adam(params, weight_decay=cfg.weight_decay)
    targets = {p.label: np.where(p.mask, p.data, 0).astype(dtype) for p in patches}
    masks = {p.label: p.mask for p in patches}
    counts = {p.label: int(p.mask.sum()) for p in patches}
    rng = np.random.default_rng(cfg.seed + 1)
    labels = [p.label for p in patches if counts[p.label] > 0]
    sched = ScheduleState(0, cfg.lr_base, cfg.lr_min, cfg.iterations)
    curve = []
    for it in range(cfg.iterations):
        batch = labels
        if 0 < cfg.minibatch_patches < len(labels):
            batch = sorted(rng.choice(labels, cfg.minibatch_patches, replace=False).tolist())
        cache: dict = {}
        terms = [ad.masked_sse(model.reconstruct_patch(k, cache), targets[k], masks[k]) for k in batch]
        loss = ad.scale(ad.add_n(terms), 1.0 / sum(counts[k] for k in batch))
        value = float(loss.value)
        if not math.isfinite(value):
            raise NumericalError(f"loss diverged at iteration {it}", iteration=it)
        curve.append(value)
        opt.zero_grad()
        ad.backward(loss)
        sched.step = it
        opt.step(cosine_lr(sched))
    return curve, opt


def train_ablation(data, mask, cfg: TrainConfig, variant: str = "full", peak: float = 1.0,
                   guide: GuideResult | None = None) -> RunResult:
    """Run one of the four component configurations.

    ``full`` is SCTR; ``no_superpixel`` fits one ALTF patch covering the whole
    tensor; ``no_altf`` keeps the superpixels but makes every factor matrix
    a free parameter; ``neither`` is one patch with free factors.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    cfg.validate()
    data = as_tensor3(data, dtype=np.float64)
    mask = check_mask(mask, data.shape)
    start = time.perf_counter()
    dtype = np.float32
    with threadpool_limits(limits=cfg.threads):
        if guide is None:
            guide = compute_guide(data, mask, cfg)
        superpixels = variant in ("full", "no_altf")
        labels, patches = build_patches(data, mask, guide, cfg, superpixels=superpixels)
        if variant in ("full", "no_superpixel"):
            model = AltfModel(cfg.backbone, cfg.downsample, seed=cfg.seed, dtype=dtype)
        else:
            model = FreeFactorModel(seed=cfg.seed, dtype=dtype)
        for p in patches:
            model.register(p.spec)
        log.info("variant=%s patches=%d", variant, len(patches))
        curve, opt = _fit(model, patches, cfg, dtype)
        outputs = {k: v.value.astype(np.float64) for k, v in model.forward_all().items()}
    recon = assemble(patches, outputs, data.shape)
    if cfg.reimpose_observed:
        recon = np.where(mask, data, recon)
    return RunResult(
        reconstruction=recon,
        metrics=evaluate(data, recon, peak),
        loss_curve=curve,
        config_echo=cfg,
        wall_time_s=time.perf_counter() - start,
        variant=variant,
        labels=labels,
        patches=patches,
        guide=guide,
        model=model,
        optimizer=opt,
        iteration_cost=estimate_iteration_cost(patches, cfg.width),
    )


def train_sctr(data, mask, cfg: TrainConfig, peak: float = 1.0, guide: GuideResult | None = None) -> RunResult:
    return train_ablation(data, mask, cfg, "full", peak=peak, guide=guide)


def granularity_superpixels(alpha: float) -> int:
    return round(8 * 2**alpha)


def sweep_granularity(data, mask, cfg: TrainConfig, alphas, peak: float = 1.0) -> list[dict]:
    """One full SCTR run per alpha with k_target = round(8 * 2**alpha)."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be nonempty")
    data = as_tensor3(data, dtype=np.float64)
    mask = check_mask(mask, data.shape)
    guide = compute_guide(data, mask, cfg)
    rows = []
    for a in alphas:
        n = granularity_superpixels(a)
        res = train_sctr(data, mask, cfg.replace(k_target=n), peak=peak, guide=guide)
        rows.append({"alpha": a, "n_superpixels": n, "patches": res.patch_count,
                     "psnr": res.metrics.psnr_db, "ssim": res.metrics.ssim})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["alpha", "n_superpixels", "patches", "psnr", "ssim"], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
