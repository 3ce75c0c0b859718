"""Batch sampling, the composite objective, and the training loop."""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .augment import AugmentPolicy, apply_batch
from .losses import (augmentation_loss, contrastive_per_domain_loss, global_contrastive_loss,
                     reconstruction_loss)
from .networks import Encoder, Generator, PerceptualNet
from .numerics import checkpoint
from .numerics.optim import DivergenceError

log = logging.getLogger(__name__)

MODES = ("redpanda", "simclr_global", "raw_encoder")
LOSS_COLUMNS = ("l_con", "l_aug", "l_rec", "total")


@dataclass
class TrainingConfig:
    tau: float = 0.1
    rec_weight: float = 0.3
    aug_weight: float = 1.0
    epochs: int = 200
    domains_per_batch: int = 4
    samples_per_domain: int = 32
    lr_encoder: float = 1e-4
    lr_generator: float = 3e-4
    seed: int = 0
    mode: str = "redpanda"
    image_size: int = 64
    dim: int = 64
    encoder_channels: tuple = (32, 64, 128, 256)
    generator_channels: tuple = (256, 128, 64, 32)
    perceptual_channels: tuple = (16, 32, 64)
    perceptual_seed: int = 1234
    standardize_input: bool = True
    # "original": positive is (original, augmented); "two_views": two augmented views
    positive_views: str = "original"
    steps_per_epoch: int = 0  # 0 -> ceil(n_train / batch_size)
    checkpoint_every: int = 0
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.generator_channels = tuple(int(c) for c in self.generator_channels)
        self.perceptual_channels = tuple(int(c) for c in self.perceptual_channels)

    @property
    def batch_size(self):
        return self.domains_per_batch * self.samples_per_domain

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if min(self.rec_weight, self.aug_weight) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.domains_per_batch < 1 or self.samples_per_domain < 1:
            raise ValueError("batch dimensions must be positive")
        if self.positive_views not in ("original", "two_views"):
            raise ValueError(f"positive_views must be 'original' or 'two_views', got {self.positive_views!r}")

    def to_dict(self):
        d = asdict(self)
        d["augment"] = asdict(self.augment)
        return d


@dataclass
class Batch:
    images: np.ndarray
    views: np.ndarray
    nuisance: np.ndarray
    indices: np.ndarray


def sample_batch(samples, cfg, rng):
    """Draw ``domains_per_batch`` distinct domains and ``samples_per_domain`` per domain.

    Within a domain samples are drawn without replacement; a domain that is
    too small is sampled with replacement and a warning is logged.
    """
    labels = np.array([s.nuisance for s in samples])
    domains = np.unique(labels)
    if len(domains) < cfg.domains_per_batch:
        raise ValueError(f"training data has {len(domains)} domains, batch needs {cfg.domains_per_batch}")
    chosen = np.sort(rng.choice(domains, size=cfg.domains_per_batch, replace=False))
    picks = []
    for d in chosen:
        pool = np.flatnonzero(labels == d)
        replace = len(pool) < cfg.samples_per_domain
        if replace:
            log.warning("domain %d has %d samples < %d requested; sampling with replacement",
                        d, len(pool), cfg.samples_per_domain)
        picks.append(rng.choice(pool, size=cfg.samples_per_domain, replace=replace))
    idx = np.concatenate(picks)
    images = np.stack([samples[i].image for i in idx]).astype(np.float32)
    views = apply_batch(cfg.augment, images, rng)
    if cfg.positive_views == "two_views":
        images = apply_batch(cfg.augment, images, rng)
    return Batch(images, views, labels[idx], idx)


class Model:
    """Encoder plus (for redpanda) generator and frozen perceptual net."""

    def __init__(self, cfg, n_domains):
        cfg.validate()
        self.cfg = cfg
        self.n_domains = n_domains
        seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
        self.encoder = Encoder(cfg.image_size, cfg.encoder_channels, cfg.dim, seed=int(seeds[0]),
                               standardize=cfg.standardize_input)
        self.generator = None
        self.pnet = None
        if cfg.mode == "redpanda" and cfg.rec_weight > 0:
            self.generator = Generator(n_domains, cfg.image_size, cfg.generator_channels, cfg.dim,
                                       seed=int(seeds[1]))
            self.pnet = PerceptualNet(cfg.perceptual_channels, seed=cfg.perceptual_seed)

    def state_dict(self):
        state = {f"encoder.{k}": v for k, v in self.encoder.state_dict().items()}
        if self.generator is not None:
            state.update({f"generator.{k}": v for k, v in self.generator.state_dict().items()})
        return state

    def load_state_dict(self, state):
        self.encoder.load_state_dict(state, prefix="encoder.")
        if self.generator is not None:
            self.generator.load_state_dict(state, prefix="generator.")


def total_loss(cfg, batch, encoder, generator=None, pnet=None):
    """Composite objective for one batch; returns ``(loss_tensor, breakdown)``.

    redpanda: L_con(per domain) + aug_weight * L_aug + rec_weight * L_rec.
    simclr_global: L_con(global) + aug_weight * L_aug.
    """
    if cfg.mode not in MODES:
        raise ValueError(f"unknown mode {cfg.mode!r}; expected one of {MODES}")
    if cfg.mode == "raw_encoder":
        raise ValueError("mode 'raw_encoder' has no training objective")
    b = batch.images.shape[0]
    codes_all = encoder(np.concatenate([batch.images, batch.views], axis=0))
    codes = nx.slice_rows(codes_all, 0, b)
    views = nx.slice_rows(codes_all, b, 2 * b)

    if cfg.mode == "redpanda":
        l_con = contrastive_per_domain_loss(codes, views, batch.nuisance, cfg.tau)
    else:
        l_con = global_contrastive_loss(codes, views, cfg.tau)
    total = l_con
    terms = {"l_con": l_con}
    if cfg.aug_weight > 0:
        l_aug = augmentation_loss(codes, views)
        total = total + l_aug * cfg.aug_weight
        terms["l_aug"] = l_aug
    if cfg.mode == "redpanda" and cfg.rec_weight > 0 and generator is not None:
        l_rec = reconstruction_loss(generator, pnet, codes, batch.nuisance, batch.images)
        total = total + l_rec * cfg.rec_weight
        terms["l_rec"] = l_rec
    breakdown = {k: float(terms[k].item()) if k in terms else 0.0 for k in LOSS_COLUMNS[:-1]}
    breakdown["total"] = float(total.item())
    return total, breakdown


@dataclass
class TrainResult:
    model: Model
    history: list
    checkpoints: list = field(default_factory=list)


def train(cfg, train_samples, n_domains=None, checkpoint_path=None, metadata=None, progress=None):
    """Optimise the model on ``train_samples`` for ``cfg.epochs`` epochs.

    Separate Adam optimisers drive the encoder and the generator. Returns the
    model and one averaged loss breakdown per epoch. Mode ``raw_encoder``
    returns the seeded initialisation untouched.
    """
    cfg.validate()
    if not train_samples:
        raise ValueError("no training samples")
    if n_domains is None:
        n_domains = max(s.nuisance for s in train_samples) + 1
    model = Model(cfg, n_domains)
    result = TrainResult(model, [])
    if cfg.mode == "raw_encoder" or cfg.epochs == 0:
        return result

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    opt_enc = nx.Adam(model.encoder.parameters(), lr=cfg.lr_encoder)
    opt_gen = nx.Adam(model.generator.parameters(), lr=cfg.lr_generator) if model.generator else None
    steps = cfg.steps_per_epoch or max(1, math.ceil(len(train_samples) / cfg.batch_size))

    for epoch in range(1, cfg.epochs + 1):
        sums = dict.fromkeys(LOSS_COLUMNS, 0.0)
        for _ in range(steps):
            batch = sample_batch(train_samples, cfg, rng)
            loss, parts = total_loss(cfg, batch, model.encoder, model.generator, model.pnet)
            for name in LOSS_COLUMNS:
                if not math.isfinite(parts[name]):
                    raise DivergenceError(f"epoch {epoch}: loss term {name} became {parts[name]}")
            nx.backward(loss)
            opt_enc.step()
            if opt_gen is not None:
                opt_gen.step()
            for name in LOSS_COLUMNS:
                sums[name] += parts[name]
        row = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
        result.history.append(row)
        log.info("epoch %d %s", epoch, " ".join(f"{k}={row[k]:.4f}" for k in LOSS_COLUMNS))
        if progress is not None:
            progress(row, model)
        if checkpoint_path and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            path = f"{checkpoint_path}.epoch{epoch:04d}"
            checkpoint.save(path, model.state_dict(), dict(metadata or {}, epoch=epoch))
            result.checkpoints.append(path)
    return result


def write_loss_csv(path, history, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch",) + LOSS_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in LOSS_COLUMNS])


def encode(encoder, images, batch_size=256):
    """Eval-mode encoding of an (N, S, S, 3) array into float64 unit rows."""
    images = np.asarray(images, dtype=np.float32)
    if images.shape[0] == 0:
        return np.zeros((0, encoder.dim))
    out = []
    for start in range(0, images.shape[0], batch_size):
        out.append(encoder(images[start:start + batch_size]).data)
    codes = np.concatenate(out).astype(np.float64)
    return codes / np.linalg.norm(codes, axis=1, keepdims=True)
