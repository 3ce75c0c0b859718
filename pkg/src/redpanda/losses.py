"""Training objectives: per-domain and global contrastive, augmentation, reconstruction."""
import numpy as np

from . import numerics as nx


def _check_pair(codes, aug_codes):
    if codes.ndim != 2 or codes.shape != aug_codes.shape:
        raise ValueError(f"codes {codes.shape} and aug_codes {aug_codes.shape} must be row-aligned 2-D")
    if codes.shape[0] == 0:
        raise ValueError("empty batch")


def _contrastive(codes, aug_codes, negative_mask, tau, reduction):
    """NT-Xent with the augmented view as positive and masked negatives.

    Row i of the logits is [sim(z_i, z_i+), sim(z_i, z_0), ..., sim(z_i, z_{B-1})] / tau;
    ``negative_mask[i, j]`` selects which z_j enter the denominator.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    b = codes.shape[0]
    inv_tau = 1.0 / tau
    pos = nx.sum_(codes * aug_codes, axis=1).reshape(b, 1) * inv_tau
    sims = (codes @ codes.T) * inv_tau
    logits = nx.concat([pos, sims], axis=1)
    mask = np.concatenate([np.ones((b, 1), dtype=bool), negative_mask], axis=1)
    per_anchor = nx.logsumexp(logits, axis=1, mask=mask) - pos.reshape(b)
    if reduction == "none":
        return per_anchor
    return nx.mean(per_anchor)


def contrastive_per_domain_loss(codes, aug_codes, nuisance, tau=0.1, reduction="mean"):
    """Contrastive loss whose negatives share the anchor's nuisance label.

    Samples from other domains never enter an anchor's denominator, so each
    domain's anchors are unaffected by codes of other domains.
    """
    _check_pair(codes, aug_codes)
    nuisance = np.asarray(nuisance)
    if nuisance.shape != (codes.shape[0],):
        raise ValueError(f"need one nuisance label per code, got {nuisance.shape} for {codes.shape[0]} codes")
    same = nuisance[:, None] == nuisance[None, :]
    np.fill_diagonal(same, False)
    return _contrastive(codes, aug_codes, same, tau, reduction)


def global_contrastive_loss(codes, aug_codes, tau=0.1, reduction="mean"):
    """SimCLR-style ablation: every other batch sample is a negative."""
    _check_pair(codes, aug_codes)
    b = codes.shape[0]
    others = ~np.eye(b, dtype=bool)
    return _contrastive(codes, aug_codes, others, tau, reduction)


def augmentation_loss(codes, aug_codes):
    """Mean negative cosine similarity between the two views (codes are unit norm)."""
    _check_pair(codes, aug_codes)
    return -nx.mean(nx.sum_(codes * aug_codes, axis=1))


def perceptual_loss(pnet, x, x_hat, pixel_weight=0.1):
    """Sum of per-layer feature MSEs plus ``pixel_weight`` times the pixel MSE."""
    x = nx.as_tensor(x)
    x_hat = nx.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"perceptual_loss: shape mismatch {x.shape} vs {x_hat.shape}")
    total = nx.mean(nx.square(x - x_hat)) * pixel_weight
    for fa, fb in zip(pnet.features(x), pnet.features(x_hat)):
        total = total + nx.mean(nx.square(fa - fb))
    return total


def reconstruction_loss(generator, pnet, codes, nuisance, images):
    """Perceptual distance between images and G(code, nuisance), averaged over the batch."""
    recon = generator(codes, nuisance)
    return perceptual_loss(pnet, images, recon)
