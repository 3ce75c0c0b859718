"""ROC-AUC and the AD / PA / RA scores."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata


def roc_auc(pos_scores, neg_scores):
    """P(pos > neg) + 0.5 * P(pos == neg), via the Mann-Whitney rank sum."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError(f"roc_auc needs nonempty sides, got {pos.size} positives and {neg.size} negatives")
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    p, n = pos.size, neg.size
    u = ranks[:p].sum() - p * (p + 1) / 2.0
    return float(u / (p * n))


def roc_auc_pairwise(pos_scores, neg_scores):
    """O(P*N) reference: count wins and half-count ties over all pairs."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("roc_auc_pairwise needs nonempty sides")
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0)
    ties = np.count_nonzero(diff == 0)
    return (wins + 0.5 * ties) / (pos.size * neg.size)


@dataclass
class ScoreReport:
    ad_score: float
    pa_score: float
    ra_score: float
    counts: dict
    config_hash: str = ""
    seed: int = None
    mode: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def pa_gap(self):
        """Distance of the PA score from its ideal value 0.5."""
        return abs(self.pa_score - 0.5)

    def to_dict(self):
        d = asdict(self)
        d["pa_gap"] = self.pa_gap
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        keys = {"ad_score", "pa_score", "ra_score", "counts", "config_hash", "seed", "mode", "extra"}
        return cls(**{k: v for k, v in d.items() if k in keys})

    def table(self, title="Method"):
        return format_table([(self.mode or title, self.ad_score, self.pa_score, self.ra_score)])


def format_table(rows):
    """Aligned AD / PA / RA table; cells may be floats or preformatted strings."""
    header = ("Method", "AD-Score (up)", "PA-Score (down)", "RA-Score (up)")
    cells = [header] + [(r[0],) + tuple(c if isinstance(c, str) else f"{c:.3f}" for c in r[1:]) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(4)]
    lines = []
    for j, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                               for i, cell in enumerate(row)))
        if j == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def compute_report(scored, config_hash="", seed=None, mode=""):
    """AD: anomaly vs familiar+pseudo; PA: pseudo vs familiar; RA: anomaly vs pseudo."""
    by_role = {"test_familiar": [], "test_pseudo": [], "test_anomaly": []}
    for s in scored:
        if s.role in by_role:
            by_role[s.role].append(s.score)
    for role, vals in by_role.items():
        if not vals:
            raise ValueError(f"scores contain no samples with role {role!r}")
    fam = by_role["test_familiar"]
    pseudo = by_role["test_pseudo"]
    anom = by_role["test_anomaly"]
    return ScoreReport(
        ad_score=roc_auc(anom, fam + pseudo),
        pa_score=roc_auc(pseudo, fam),
        ra_score=roc_auc(anom, pseudo),
        counts={role: len(v) for role, v in by_role.items()},
        config_hash=config_hash,
        seed=seed,
        mode=mode,
    )
