"""Encoder, conditional generator and frozen perceptual feature network."""
import math

import numpy as np

from . import numerics as nx
from .numerics import Tensor


def _he(rng, shape, fan_in, dtype):
    return Tensor((rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype), requires_grad=True)


class Module:
    """Holds named parameters in a fixed order (the checkpoint order)."""

    def __init__(self):
        self.params = {}

    def _add(self, name, tensor):
        self.params[name] = tensor
        return tensor

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state, prefix=""):
        for name, p in self.params.items():
            key = prefix + name
            if key not in state:
                raise KeyError(f"missing parameter {key!r} in checkpoint")
            value = np.asarray(state[key])
            if value.shape != p.shape:
                raise ValueError(f"parameter {key!r}: checkpoint shape {value.shape} != model shape {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def freeze(self):
        for p in self.params.values():
            p.requires_grad = False
        return self


STANDARDIZE_EPS = 0.05


def standardize_images(images, eps=STANDARDIZE_EPS):
    """Per-image, per-channel (x - mean) / (std + eps); eps keeps flat images finite."""
    mean = images.mean(axis=(1, 2), keepdims=True)
    std = images.std(axis=(1, 2), keepdims=True)
    return ((images - mean) / (std + eps)).astype(images.dtype)


class Encoder(Module):
    """Stride-2 conv blocks, a linear head, and l2 normalisation.

    Maps (N, S, S, 3) images to (N, dim) unit-norm codes. With `standardize`
    each image is first shifted and scaled per channel to zero mean and unit
    spread; this is a fixed input transform, so no gradient reaches the images.
    """

    def __init__(self, image_size=64, channels=(32, 64, 128, 256), dim=64, seed=0,
                 slope=0.2, dtype=np.float32, standardize=False):
        super().__init__()
        self.image_size = image_size
        self.standardize = bool(standardize)
        self.channels = tuple(channels)
        self.dim = dim
        self.slope = slope
        rng = np.random.default_rng(seed)
        cin = 3
        side = image_size
        for i, cout in enumerate(self.channels):
            self._add(f"conv{i}.w", _he(rng, (3, 3, cin, cout), 9 * cin, dtype))
            self._add(f"conv{i}.b", Tensor(np.zeros(cout, dtype=dtype), requires_grad=True))
            cin = cout
            side = (side + 1) // 2
        flat = side * side * cin
        self.flat_features = flat
        self._add("head.w", _he(rng, (flat, dim), flat, dtype))
        self._add("head.b", Tensor(np.zeros(dim, dtype=dtype), requires_grad=True))

    def __call__(self, images):
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.params["head.w"].dtype))
        if x.ndim != 4 or x.shape[1:] != (self.image_size, self.image_size, 3):
            raise ValueError(f"encoder expects (N, {self.image_size}, {self.image_size}, 3) images, got {x.shape}")
        if self.standardize:
            x = Tensor(standardize_images(x.data))
        for i in range(len(self.channels)):
            x = nx.conv2d(x, self.params[f"conv{i}.w"], stride=2) + self.params[f"conv{i}.b"]
            x = nx.leaky_relu(x, self.slope)
        x = x.reshape(x.shape[0], -1)
        x = x @ self.params["head.w"] + self.params["head.b"]
        return nx.l2_normalize(x, axis=1)


class Generator(Module):
    """Decoder conditioned on a one-hot nuisance label.

    concat(code, onehot) -> linear -> 4x4xC0 -> [upsample, conv] blocks -> sigmoid.
    """

    def __init__(self, n_domains, image_size=64, channels=(256, 128, 64, 32), dim=64, seed=1,
                 slope=0.2, dtype=np.float32):
        super().__init__()
        blocks = int(round(math.log2(image_size / 4)))
        if 4 * 2 ** blocks != image_size:
            raise ValueError(f"generator image_size must be 4 * 2^k, got {image_size}")
        if len(channels) < blocks:
            raise ValueError(f"need {blocks} generator channel widths, got {channels}")
        self.n_domains = n_domains
        self.image_size = image_size
        self.dim = dim
        self.slope = slope
        self.channels = tuple(channels[:blocks])
        rng = np.random.default_rng(seed)
        c0 = self.channels[0]
        fan_in = dim + n_domains
        self._add("fc.w", _he(rng, (fan_in, 16 * c0), fan_in, dtype))
        self._add("fc.b", Tensor(np.zeros(16 * c0, dtype=dtype), requires_grad=True))
        outs = self.channels[1:] + (3,)
        cin = c0
        for i, cout in enumerate(outs):
            self._add(f"up{i}.w", _he(rng, (3, 3, cin, cout), 9 * cin, dtype))
            self._add(f"up{i}.b", Tensor(np.zeros(cout, dtype=dtype), requires_grad=True))
            cin = cout
        self.blocks = len(outs)

    def one_hot(self, nuisance):
        nuisance = np.asarray(nuisance, dtype=int)
        if nuisance.size and (nuisance.min() < 0 or nuisance.max() >= self.n_domains):
            raise ValueError(f"nuisance labels must lie in [0, {self.n_domains}), got {np.unique(nuisance)}")
        out = np.zeros((nuisance.size, self.n_domains), dtype=self.params["fc.w"].dtype)
        out[np.arange(nuisance.size), nuisance] = 1.0
        return out

    def __call__(self, codes, nuisance):
        z = nx.concat([codes, Tensor(self.one_hot(nuisance))], axis=1)
        x = z @ self.params["fc.w"] + self.params["fc.b"]
        x = nx.leaky_relu(x, self.slope).reshape(z.shape[0], 4, 4, self.channels[0])
        for i in range(self.blocks):
            x = nx.conv2d(nx.upsample2x(x), self.params[f"up{i}.w"]) + self.params[f"up{i}.b"]
            x = nx.leaky_relu(x, self.slope) if i < self.blocks - 1 else nx.sigmoid(x)
        return x


class PerceptualNet(Module):
    """Frozen random conv features; never trained, fixed by ``seed``."""

    def __init__(self, channels=(16, 32, 64), seed=1234, slope=0.2, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.slope = slope
        self.strides = (1,) + (2,) * (len(channels) - 1)
        cin = 3
        for i, cout in enumerate(channels):
            self._add(f"conv{i}.w", _he(rng, (3, 3, cin, cout), 9 * cin, dtype))
            cin = cout
        self.freeze()

    def features(self, images):
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.params["conv0.w"].dtype))
        feats = []
        for i, stride in enumerate(self.strides):
            x = nx.leaky_relu(nx.conv2d(x, self.params[f"conv{i}.w"], stride=stride), self.slope)
            feats.append(x)
        return feats

    def astype(self, dtype):
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self
