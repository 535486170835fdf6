"""ALTF: shared sine backbone, per-patch linear heads and Tucker cores.

Each patch axis is described by a coordinate array in [-1, 1]. The shared
backbone maps the array (N values) to an N x D feature matrix, the patch's
head for that axis maps the features to an N x R factor matrix, and the
patch is the Tucker product of its learnable core with the three factors.

Because coordinates are normalized per patch, the coordinate array (and so
the backbone output) depends only on the axis length. A forward pass over
many patches evaluates the backbone once per distinct length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .superpixel import PatchSpec


@dataclass(frozen=True)
class BackboneConfig:
    width: int = 256
    residual_blocks: int = 4
    omega0: float = 3.0
    attention_heads: int = 1
    attention: bool = True

    def __post_init__(self):
        if self.width < 1 or self.residual_blocks < 0:
            raise ValueError(f"invalid backbone config {self}")
        if self.attention_heads != 1:
            raise ValueError("only single-head attention is supported")


def coordinate_array(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"axis length must be positive, got {n}")
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def downsampled_length(length: int, d: int) -> int:
    return max(1, math.ceil(length / d))


def interpolation_matrix(length: int, n: int) -> np.ndarray:
    """(length x n) piecewise-linear map from n evenly spaced rows to ``length`` rows.

    Endpoints map to endpoints, so each output row is a convex combination of
    at most two neighbouring input rows.
    """
    p = np.zeros((length, n))
    if n == 1:
        p[:, 0] = 1.0
        return p
    if length == 1:
        p[0, 0] = 1.0
        return p
    t = np.arange(length) * (n - 1) / (length - 1)
    lo = np.minimum(np.floor(t).astype(int), n - 2)
    frac = t - lo
    rows = np.arange(length)
    p[rows, lo] = 1.0 - frac
    p[rows, lo + 1] += frac
    return p


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Backbone:
    """SineLayer -> residual sine blocks -> ReLU -> self-attention (with residual)."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        d, w0 = cfg.width, cfg.omega0
        self.w_in = Parameter(_uniform(rng, 1.0, (1, d), dtype), "backbone.in.w")
        self.b_in = Parameter(_uniform(rng, 1.0, (d,), dtype), "backbone.in.b")
        hidden = math.sqrt(6.0 / d) / w0
        self.blocks = [
            (
                Parameter(_uniform(rng, hidden, (d, d), dtype), f"backbone.res{i}.w"),
                Parameter(_uniform(rng, 1.0 / math.sqrt(d), (d,), dtype), f"backbone.res{i}.b"),
            )
            for i in range(cfg.residual_blocks)
        ]
        self.attn = None
        if cfg.attention:
            b = 1.0 / math.sqrt(d)
            self.attn = tuple(
                Parameter(_uniform(rng, b, (d, d), dtype), f"backbone.attn.{n}") for n in "qkv"
            )

    def parameters(self) -> list[Parameter]:
        ps = [self.w_in, self.b_in]
        for w, b in self.blocks:
            ps += [w, b]
        if self.attn:
            ps += list(self.attn)
        return ps

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def forward(self, coords) -> ad.Node:
        w0 = self.cfg.omega0
        x = ad.Node(np.asarray(coords, dtype=self.dtype).reshape(-1, 1))
        h = ad.sin(ad.scale(ad.add(ad.matmul(x, self.w_in), self.b_in), w0))
        for w, b in self.blocks:
            h = ad.add(h, ad.sin(ad.scale(ad.add(ad.matmul(h, w), b), w0)))
        h = ad.relu(h)
        if self.attn is not None:
            wq, wk, wv = self.attn
            q, k, v = ad.matmul(h, wq), ad.matmul(h, wk), ad.matmul(h, wv)
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(self.cfg.width))
            h = ad.add(h, ad.matmul(ad.softmax(scores, axis=-1), v))
        return h


def backbone_forward(backbone: Backbone, coords) -> np.ndarray:
    return backbone.forward(coords).value


class _FactorSource:
    """Shared bookkeeping for models that map a PatchSpec to a Tucker patch."""

    def __init__(self, dtype=np.float32, seed: int = 0):
        self.dtype = dtype
        self.rng = np.random.default_rng(seed)
        self.specs: dict[int, PatchSpec] = {}
        self.cores: dict[int, Parameter] = {}

    def _spec(self, patch) -> PatchSpec:
        label = patch if isinstance(patch, (int, np.integer)) else patch.label
        if int(label) not in self.specs:
            raise ValueError(f"patch {label} is not registered")
        return self.specs[int(label)]

    def _new_core(self, spec: PatchSpec) -> Parameter:
        core = self.rng.normal(0.0, 0.1, size=spec.ranks).astype(self.dtype)
        return Parameter(core, f"patch{spec.label}.core")

    def reconstruct_patch(self, patch, cache=None) -> ad.Node:
        spec = self._spec(patch)
        u, v, w = self.generate_factors(spec, cache)
        core = self.cores[spec.label]
        out = ad.mode_n_product(core, u, 1)
        out = ad.mode_n_product(out, v, 2)
        return ad.mode_n_product(out, w, 3)

    def forward_all(self) -> dict[int, ad.Node]:
        cache: dict = {}
        return {label: self.reconstruct_patch(label, cache) for label in sorted(self.specs)}


class AltfModel(_FactorSource):
    """One shared backbone plus a (heads, core) pair per registered patch."""

    def __init__(self, cfg: BackboneConfig = BackboneConfig(), downsample=(1, 1, 1),
                 seed: int = 0, dtype=np.float32):
        super().__init__(dtype, seed)
        if len(downsample) != 3 or min(downsample) < 1:
            raise ValueError(f"downsample must be 3 positive integers, got {downsample}")
        self.cfg = cfg
        self.downsample = tuple(int(d) for d in downsample)
        self.backbone = Backbone(cfg, self.rng, dtype)
        self.heads: dict[int, list[tuple[Parameter, Parameter]]] = {}

    def register(self, spec: PatchSpec) -> None:
        d = self.cfg.width
        bound = 1.0 / math.sqrt(d)
        heads = []
        for axis, r in zip("UVW", spec.ranks):
            w = Parameter(_uniform(self.rng, bound, (d, r), self.dtype), f"patch{spec.label}.head{axis}.w")
            b = Parameter(_uniform(self.rng, bound, (r,), self.dtype), f"patch{spec.label}.head{axis}.b")
            heads.append((w, b))
        self.specs[spec.label] = spec
        self.heads[spec.label] = heads
        self.cores[spec.label] = self._new_core(spec)

    def parameters(self) -> list[Parameter]:
        ps = self.backbone.parameters()
        for label in sorted(self.specs):
            for w, b in self.heads[label]:
                ps += [w, b]
            ps.append(self.cores[label])
        return ps

    def patch_parameter_count(self, label: int) -> int:
        return sum(w.value.size + b.value.size for w, b in self.heads[label]) + self.cores[label].value.size

    def features(self, n: int, cache=None) -> ad.Node:
        if cache is not None and ("feat", n) in cache:
            return cache[("feat", n)]
        out = self.backbone.forward(coordinate_array(n))
        if cache is not None:
            cache[("feat", n)] = out
        return out

    def generate_factors(self, patch, cache=None):
        spec = self._spec(patch)
        factors = []
        for length, d, (w, b) in zip(spec.dims, self.downsample, self.heads[spec.label]):
            n = downsampled_length(length, d)
            f = ad.add(ad.matmul(self.features(n, cache), w), b)
            if n != length:
                f = ad.matmul(interpolation_matrix(length, n).astype(self.dtype), f)
            factors.append(f)
        return tuple(factors)


class FreeFactorModel(_FactorSource):
    """Per-patch factor matrices as free parameters (no backbone, no heads)."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        super().__init__(dtype, seed)
        self.factors: dict[int, tuple[Parameter, Parameter, Parameter]] = {}

    def register(self, spec: PatchSpec) -> None:
        fs = []
        for axis, length, r in zip("UVW", spec.dims, spec.ranks):
            init = self.rng.uniform(0.0, 1.0, size=(length, r)) / math.sqrt(length)
            fs.append(Parameter(init.astype(self.dtype), f"patch{spec.label}.factor{axis}"))
        self.specs[spec.label] = spec
        self.factors[spec.label] = tuple(fs)
        self.cores[spec.label] = self._new_core(spec)

    def parameters(self) -> list[Parameter]:
        ps = []
        for label in sorted(self.specs):
            ps += list(self.factors[label])
            ps.append(self.cores[label])
        return ps

    def generate_factors(self, patch, cache=None):
        return self.factors[self._spec(patch).label]


def head_core_parameter_count(width: int, ranks) -> int:
    r1, r2, r3 = ranks
    return width * (r1 + r2 + r3) + (r1 + r2 + r3) + r1 * r2 * r3


def estimate_iteration_cost(patches, width: int = 256) -> int:
    """Per-iteration operation count: backbone, head projections, Tucker products."""
    total = 0
    for p in patches:
        spec = getattr(p, "spec", p)
        h, w, c = spec.dims
        r1, r2, r3 = spec.ranks
        total += (
            width * width * (h + w + c)
            + width * (h * r1 + w * r2 + c * r3)
            + h * r1 * r2 * r3
            + h * w * r2 * r3
            + h * w * c * r3
        )
    return total
