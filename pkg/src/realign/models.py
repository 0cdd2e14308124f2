"""MiniCor backbone and the multi-layer EEG encoding head.

MiniCor keeps the CORnet-S layout at desk scale: a V1 block
(conv, maxpool, conv) followed by three bottleneck blocks V2, V4 and IT that
are unrolled 2, 4 and 2 times with shared weights, then an average-pool +
linear category decoder.  Batch normalisation is omitted.

Full-scale CORnet-S uses a 7x7/stride-2 V1 conv on 224x224 input and a 4x
bottleneck expansion.  The defaults here are 3x3 and 2x; ``BackboneSpec``
carries both so a full-scale configuration can be expressed, but only the
32x32 default is exercised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

STAGES = ("V1", "V2", "V4", "IT")


@dataclass(frozen=True)
class BackboneSpec:
    in_channels: int = 3
    image_size: int = 32
    widths: tuple[int, int, int, int] = (16, 32, 64, 128)
    times: tuple[int, int, int, int] = (1, 2, 4, 2)
    n_classes: int = 16
    v1_kernel: int = 3
    bottleneck_scale: int = 2

    def validate(self, strict_times: bool = True) -> None:
        if len(self.widths) != 4 or len(self.times) != 4:
            raise ValueError("BackboneSpec: need exactly 4 stages (V1, V2, V4, IT)")
        if strict_times and tuple(self.times) != (1, 2, 4, 2):
            raise ValueError(f"BackboneSpec: recurrence counts must be (1, 2, 4, 2), got {self.times}")
        if any(t < 1 for t in self.times):
            raise ValueError("BackboneSpec: recurrence counts must be >= 1")
        if self.n_classes < 2:
            raise ValueError("BackboneSpec: n_classes must be >= 2")
        if any(w < 1 for w in self.widths) or self.in_channels < 1 or self.image_size < 8:
            raise ValueError("BackboneSpec: non-positive width or image too small")


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Ordered name -> Tensor mapping with a stage tag per parameter."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.stages: dict[str, str] = {}

    def add(self, name: str, value: np.ndarray, stage: str) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        self.stages[name] = stage
        return t

    def conv(self, rng, name, cin, cout, k, stage, scale=1.0):
        w = self.add(f"{name}.weight", scale * _he_uniform(rng, (cout, cin, k, k), cin * k * k), stage)
        b = self.add(f"{name}.bias", np.zeros(cout), stage)
        return w, b

    def linear(self, rng, name, cin, cout, stage):
        w = self.add(f"{name}.weight", _he_uniform(rng, (cout, cin), cin), stage)
        b = self.add(f"{name}.bias", np.zeros(cout), stage)
        return w, b

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing parameters: {sorted(missing)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise dc.ShapeError(f"parameter {k}: checkpoint shape {arr.shape} != {t.shape}")
            t.data = arr.copy()


class MiniCor:
    """Recurrent convolutional backbone; ``forward_features`` returns stage maps and logits."""

    def __init__(self, spec: BackboneSpec = BackboneSpec(), seed: int = 0, strict: bool = True):
        spec.validate(strict_times=strict)
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        p = self.store = ParamStore()
        w1, w2, w4, wit = spec.widths
        k = spec.v1_kernel
        self.v1 = (
            p.conv(rng, "V1.conv1", spec.in_channels, w1, k, "V1"),
            p.conv(rng, "V1.conv2", w1, w1, 3, "V1"),
        )
        self.blocks = {}
        cin = w1
        for stage, cout in zip(STAGES[1:], (w2, w4, wit)):
            mid = cout * spec.bottleneck_scale
            self.blocks[stage] = {
                "conv_input": p.conv(rng, f"{stage}.conv_input", cin, cout, 1, stage),
                "skip": p.conv(rng, f"{stage}.skip", cout, cout, 1, stage),
                "conv1": p.conv(rng, f"{stage}.conv1", cout, mid, 1, stage),
                "conv2": p.conv(rng, f"{stage}.conv2", mid, mid, 3, stage),
                # small residual branch keeps unrolled activations bounded without batch norm
                "conv3": p.conv(rng, f"{stage}.conv3", mid, cout, 1, stage, scale=0.5),
            }
            cin = cout
        self.decoder = p.linear(rng, "decoder.linear", wit, spec.n_classes, "decoder")

    @property
    def times(self) -> dict[str, int]:
        return dict(zip(STAGES, self.spec.times))

    def parameters(self) -> list[Tensor]:
        return list(self.store)

    def _block(self, stage: str, x: Tensor) -> Tensor:
        blk = self.blocks[stage]
        x = dc.relu(dc.conv2d(x, *blk["conv_input"]))
        for t in range(self.times[stage]):
            stride = 2 if t == 0 else 1
            skip = dc.conv2d(x, *blk["skip"], stride=2) if t == 0 else x
            h = dc.relu(dc.conv2d(x, *blk["conv1"]))
            h = dc.relu(dc.conv2d(h, *blk["conv2"], stride=stride, padding=1))
            h = dc.conv2d(h, *blk["conv3"])
            x = dc.relu(dc.add(h, skip))
        return x

    def forward_features(self, images) -> dict[str, Tensor]:
        x = images if isinstance(images, Tensor) else Tensor(images)
        s = self.spec
        if x.data.ndim != 4 or x.shape[1:] != (s.in_channels, s.image_size, s.image_size):
            raise dc.ShapeError(
                f"MiniCor: expected (N, {s.in_channels}, {s.image_size}, {s.image_size}) images, got {x.shape}"
            )
        (cw1, cb1), (cw2, cb2) = self.v1
        k = s.v1_kernel
        h = dc.relu(dc.conv2d(x, cw1, cb1, stride=2, padding=k // 2))
        h = dc.maxpool2d(h, 3, 2, padding=1)
        h = dc.relu(dc.conv2d(h, cw2, cb2, stride=1, padding=1))
        out = {"V1": h}
        for stage in STAGES[1:]:
            h = self._block(stage, h)
            out[stage] = h
        out["logits"] = dc.dense(dc.global_avg_pool(h), *self.decoder)
        return out

    def logits(self, images) -> np.ndarray:
        return self.forward_features(images)["logits"].data


def build_backbone(spec: BackboneSpec = BackboneSpec(), seed: int = 0) -> MiniCor:
    return MiniCor(spec, seed)


class EncodingHead:
    """Per-stage pooled features -> ReLU(128) each -> concat(512) -> linear(D).

    The final EEG readout starts at ``readout_scale`` times He-uniform so the
    initial predictions sit near recorded EEG amplitudes rather than O(1).
    """

    ENC_WIDTH = 128

    def __init__(
        self, stage_widths: tuple[int, ...], out_dim: int = 340, seed: int = 0, readout_scale: float = 0.01
    ):
        if len(stage_widths) != len(STAGES):
            raise ValueError(f"EncodingHead: need {len(STAGES)} stage widths, got {len(stage_widths)}")
        rng = np.random.default_rng(seed)
        self.out_dim = out_dim
        p = self.store = ParamStore()
        self.encoders = {
            stage: p.linear(rng, f"enc.{stage}", w, self.ENC_WIDTH, f"enc.{stage}")
            for stage, w in zip(STAGES, stage_widths)
        }
        self.concat_width = self.ENC_WIDTH * len(STAGES)
        self.readout = p.linear(rng, "enc.eeg", self.concat_width, out_dim, "enc.eeg")
        self.readout[0].data *= readout_scale
        assert all(w.shape[0] == 128 for w, _ in self.encoders.values())
        assert self.concat_width == 512 and self.readout[0].shape == (out_dim, 512)

    @classmethod
    def for_backbone(cls, model: MiniCor, out_dim: int = 340, seed: int = 0, **kw) -> "EncodingHead":
        return cls(model.spec.widths, out_dim, seed, **kw)

    def parameters(self) -> list[Tensor]:
        return list(self.store)

    def forward(self, features: dict[str, Tensor]) -> Tensor:
        missing = [s for s in STAGES if s not in features]
        if missing:
            raise KeyError(f"EncodingHead: missing stage features {missing}")
        parts = [dc.relu(dc.dense(dc.global_avg_pool(features[s]), *self.encoders[s])) for s in STAGES]
        return dc.dense(dc.concat(parts, axis=1), *self.readout)


def encoding_forward(head: EncodingHead, stage_features: dict[str, Tensor]) -> Tensor:
    return head.forward(stage_features)


def forward_features(model: MiniCor, image_batch) -> dict[str, Tensor]:
    return model.forward_features(image_batch)


def extract_features(model: MiniCor, images: np.ndarray, batch: int = 64) -> dict[str, np.ndarray]:
    """Flattened per-image stage activations (no graph kept)."""
    chunks: dict[str, list[np.ndarray]] = {}
    for i in range(0, len(images), batch):
        x = Tensor(images[i : i + batch])
        feats = model.forward_features(x)
        for k, v in feats.items():
            chunks.setdefault(k, []).append(v.data.reshape(v.shape[0], -1))
    return {k: np.concatenate(v, axis=0) for k, v in chunks.items()}
