"""kNN density scoring over encoder codes.

Score = mean over the k most similar bank rows of (1 - cosine similarity),
so larger means more anomalous and every score lies in [0, 2]. Search is
exhaustive.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .training import encode


@dataclass(frozen=True)
class CodeBank:
    codes: np.ndarray
    ids: tuple

    def __post_init__(self):
        if self.codes.ndim != 2 or self.codes.shape[0] == 0:
            raise ValueError("code bank must be a nonempty 2-D matrix")
        if len(self.ids) != self.codes.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for {self.codes.shape[0]} codes")

    def __len__(self):
        return self.codes.shape[0]

    @classmethod
    def from_codes(cls, codes, ids=None):
        codes = np.asarray(codes, dtype=np.float64)
        if codes.ndim != 2 or codes.shape[0] == 0:
            raise ValueError("code bank must be a nonempty 2-D matrix")
        norms = np.linalg.norm(codes, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("code bank contains a zero vector")
        ids = tuple(ids) if ids is not None else tuple(range(codes.shape[0]))
        return cls(codes / norms, ids)


def build_bank(encoder, train_samples):
    if not train_samples:
        raise ValueError("cannot build a code bank from an empty training split")
    codes = encode(encoder, np.stack([s.image for s in train_samples]))
    return CodeBank.from_codes(codes, [s.id for s in train_samples])


def score_codes(bank, codes, k=1):
    """Vectorised kNN scores for an (M, d) matrix of query codes."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(bank):
        raise ValueError(f"k={k} exceeds bank size {len(bank)}")
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    codes = codes / np.linalg.norm(codes, axis=1, keepdims=True)
    sims = codes @ bank.codes.T
    if k < sims.shape[1]:
        top = -np.partition(-sims, k - 1, axis=1)[:, :k]
    else:
        top = sims
    top = -np.sort(-top, axis=1)
    return np.clip(1.0 - top.mean(axis=1), 0.0, 2.0)


def anomaly_score(bank, code, k=1):
    return float(score_codes(bank, np.asarray(code)[None], k)[0])


@dataclass(frozen=True)
class ScoredSample:
    id: str
    role: str
    score: float


def score_split(encoder, bank, test_samples, k=1):
    """One (id, role, score) triple per test sample, in input order."""
    if not test_samples:
        return []
    codes = encode(encoder, np.stack([s.image for s in test_samples]))
    scores = score_codes(bank, codes, k)
    return [ScoredSample(s.id, s.role, float(v)) for s, v in zip(test_samples, scores)]


def write_scores(path, scored, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "role", "score"])
        for s in scored:
            writer.writerow([s.id, s.role, repr(float(s.score))])


def read_scores(path):
    """Read a scores CSV; lines starting with ``#`` are metadata comments."""
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    if reader.fieldnames != ["id", "role", "score"]:
        raise ValueError(f"{path}: expected header id,role,score, got {reader.fieldnames}")
    return [ScoredSample(r["id"], r["role"], float(r["score"])) for r in reader]


def read_comment_metadata(path):
    """Parse the leading ``# key=value;key=value`` line of a CSV artifact."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        return {}
    meta = {}
    for part in first[1:].strip().split(";"):
        if "=" in part:
            key, value = part.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta
