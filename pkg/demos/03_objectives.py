"""
Per-domain negatives
====================

The contrastive term only contrasts an anchor with samples of its own
nuisance domain. Moving codes of other domains therefore cannot change an
anchor's loss, while the global (SimCLR-style) variant reacts to them.
"""
import numpy as np

import redpanda.numerics as nx
from redpanda.losses import augmentation_loss, contrastive_per_domain_loss, global_contrastive_loss

rng = np.random.default_rng(0)


def unit(n, d=8):
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


labels = np.repeat([0, 1, 2, 3], 4)
z, zp = unit(16), unit(16)

per = contrastive_per_domain_loss(nx.Tensor(z), nx.Tensor(zp), labels, reduction="none").data
glob = global_contrastive_loss(nx.Tensor(z), nx.Tensor(zp), reduction="none").data

moved = z.copy()
moved[labels != 0] = unit(12)
per2 = contrastive_per_domain_loss(nx.Tensor(moved), nx.Tensor(zp), labels, reduction="none").data
glob2 = global_contrastive_loss(nx.Tensor(moved), nx.Tensor(zp), reduction="none").data

print("domain-0 anchors, per-domain loss unchanged:", per[:4].tobytes() == per2[:4].tobytes())
print("domain-0 anchors, global loss change       :", np.round(glob2[:4] - glob[:4], 4))

# with identical codes each anchor sees 1 positive + 3 in-domain negatives
same = np.tile(unit(1), (16, 1))
print("uniform codes:", round(contrastive_per_domain_loss(nx.Tensor(same), nx.Tensor(same), labels).item(), 6),
      "= log 4 =", round(np.log(4), 6))
print("augmentation loss of identical views:", augmentation_loss(nx.Tensor(z), nx.Tensor(z)).item())
