"""Experiment configuration, resumable pipeline stages, and multi-seed reports.

Layout under the output root::

    dataset/manifest.csv, dataset/images/, dataset/dataset.json
    runs/<mode>/seed<s>/model.ckpt, loss.csv, scores.csv, report.json, report.txt

Every artifact carries the config hash, dataset hash and seed. A stage whose
outputs already exist with matching hashes is skipped without touching them.
"""
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentPolicy
from .metrics import ScoreReport, compute_report, format_table
from .numerics import checkpoint
from .scorer import build_bank, read_comment_metadata, read_scores, score_split, write_scores
from .synthdata import BenchmarkSpec, build_benchmark, read_manifest, write_manifest
from .training import MODES, Model, TrainingConfig, train, write_loss_csv

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "REDPANDA_OUTPUT_ROOT"
DEFAULT_SEEDS = (0, 1, 2)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


def _ints(value):
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _bool(value):
    return value.strip().lower() in ("1", "true", "yes", "on")


def _floats(value):
    return tuple(float(v) for v in value.replace(" ", "").split(",") if v)


_TRAINING_KEYS = {
    "tau": float, "rec_weight": float, "aug_weight": float, "epochs": int,
    "domains_per_batch": int, "samples_per_domain": int, "lr_encoder": float, "lr_generator": float,
    "dim": int, "encoder_channels": _ints, "generator_channels": _ints, "perceptual_channels": _ints,
    "perceptual_seed": int, "positive_views": str, "steps_per_epoch": int, "checkpoint_every": int,
    "standardize_input": _bool,
}
_AUGMENT_KEYS = {
    "blur": _bool,
    "blur_kernel": int, "blur_sigma": float,
    "contrast": lambda v: _floats(v) or None, "saturation": lambda v: _floats(v) or None,
    "crop_scale": lambda v: _floats(v) or None,
}


@dataclass
class ExperimentConfig:
    benchmark: BenchmarkSpec = None
    manifest: str = None
    training: dict = field(default_factory=dict)
    augment: dict = field(default_factory=dict)
    k: int = 1
    output_root: str = "runs"
    seeds: tuple = DEFAULT_SEEDS
    modes: tuple = MODES
    source: str = ""

    def validate(self):
        if (self.benchmark is None) == (self.manifest is None):
            raise ConfigError("[dataset] needs either benchmark keys or 'manifest', not both")
        if self.benchmark is not None:
            self.benchmark.validate()
        elif not Path(self.manifest).joinpath("manifest.csv").is_file():
            raise ConfigError(f"[dataset] manifest directory {self.manifest} has no manifest.csv")
        if not self.seeds:
            raise ConfigError("[seeds] list is empty")
        if self.k < 1:
            raise ConfigError(f"[scoring] k must be >= 1, got {self.k}")
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigError(f"unknown mode {mode!r} in [seeds] modes")
        self.training_config("redpanda", 0, 0).validate()

    def training_config(self, mode, seed, image_size):
        return TrainingConfig(mode=mode, seed=seed, image_size=image_size,
                              augment=AugmentPolicy(**self.augment), **self.training)

    def canonical(self):
        """Stable text identifying everything that affects results except mode and seed."""
        doc = {
            "dataset": self.benchmark.to_text() if self.benchmark else {"manifest": _manifest_digest(self.manifest)},
            "training": {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.training.items())},
            "augment": dataclasses.asdict(AugmentPolicy(**self.augment)),
            "k": self.k,
        }
        return json.dumps(doc, sort_keys=True)

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def dataset_hash(self):
        text = self.benchmark.to_text() if self.benchmark else _manifest_digest(self.manifest)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def root(self):
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.output_root)

    def dataset_dir(self):
        return Path(self.manifest) if self.manifest else self.root() / "dataset"

    def run_dir(self, mode, seed):
        return self.root() / "runs" / mode / f"seed{seed}"


def _manifest_digest(directory):
    return hashlib.sha256(Path(directory, "manifest.csv").read_bytes()).hexdigest()


def parse_config(text, base_dir="."):
    """Parse the INI experiment config; relative paths resolve against ``base_dir``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    allowed = {"dataset", "training", "augment", "scoring", "output", "seeds"}
    extra = set(parser.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    cfg = ExperimentConfig(source=text)
    dataset = dict(parser["dataset"]) if parser.has_section("dataset") else {}
    if "manifest" in dataset:
        cfg.manifest = str(Path(base_dir, dataset.pop("manifest")))
        if dataset:
            raise ConfigError(f"[dataset] keys {sorted(dataset)} conflict with 'manifest'")
    else:
        try:
            cfg.benchmark = BenchmarkSpec.from_mapping(dataset)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[dataset] {exc}") from exc
    for section, keys, target in (("training", _TRAINING_KEYS, cfg.training), ("augment", _AUGMENT_KEYS, cfg.augment)):
        if not parser.has_section(section):
            continue
        for key, value in parser[section].items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                target[key] = keys[key](value)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if parser.has_section("scoring"):
        cfg.k = parser["scoring"].getint("k", fallback=1)
    if parser.has_section("output"):
        root = parser["output"].get("root", "runs")
        cfg.output_root = str(Path(base_dir, root))
    else:
        cfg.output_root = str(Path(base_dir, "runs"))
    if parser.has_section("seeds"):
        sec = parser["seeds"]
        cfg.seeds = _ints(sec.get("seeds", ",".join(map(str, DEFAULT_SEEDS))))
        if "modes" in sec:
            cfg.modes = tuple(m.strip() for m in sec["modes"].split(",") if m.strip())
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent)


def _meta_line(cfg, mode=None, seed=None):
    parts = [f"config_hash={cfg.config_hash()}", f"dataset_hash={cfg.dataset_hash()}"]
    if mode is not None:
        parts.append(f"mode={mode}")
    if seed is not None:
        parts.append(f"seed={seed}")
    return ";".join(parts)


def _atomic_write(path, data):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data if isinstance(data, bytes) else data.encode())
    os.replace(tmp, path)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError):
        return None


# ---------------------------------------------------------------- stages

def generate(cfg):
    """Materialise (or index) the dataset; returns per-role counts."""
    out = cfg.dataset_dir()
    info_path = cfg.root() / "dataset" / "dataset.json"
    info = _read_json(info_path)
    if info and info.get("dataset_hash") == cfg.dataset_hash():
        log.info("dataset %s is up to date", out)
        return info["counts"]
    if cfg.benchmark is not None:
        split = build_benchmark(cfg.benchmark)
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_manifest(split, out)
        except OSError as exc:
            raise StageError(f"cannot write dataset to {out}: {exc}") from exc
        image_size = cfg.benchmark.image_size
    else:
        split = read_manifest(out)
        image_size = split.all_samples()[0].image.shape[0]
    counts = split.counts()
    n_domains = max(s.nuisance for s in split.all_samples()) + 1
    info = {"dataset_hash": cfg.dataset_hash(), "counts": counts, "n_domains": n_domains,
            "image_size": image_size, "manifest_dir": str(out)}
    try:
        info_path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(info_path, json.dumps(info, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise StageError(f"cannot write {info_path}: {exc}") from exc
    return counts


def _dataset(cfg):
    info_path = cfg.root() / "dataset" / "dataset.json"
    info = _read_json(info_path)
    if info is None:
        raise StageError(f"dataset not generated: expected {info_path} (run 'generate' first)")
    if info["dataset_hash"] != cfg.dataset_hash():
        raise StageError(f"{info_path} has dataset hash {info['dataset_hash']}, config expects "
                         f"{cfg.dataset_hash()}; re-run 'generate'")
    return info, read_manifest(info["manifest_dir"])


def _record_time(run, stage, seconds):
    path = Path(run) / "timing.json"
    times = _read_json(path) or {}
    times[stage] = round(seconds, 3)
    _atomic_write(path, json.dumps(times, indent=2, sort_keys=True) + "\n")


def run_seconds(run):
    """Wall time recorded by the stages of one run directory."""
    return sum((_read_json(Path(run) / "timing.json") or {}).values())


def _up_to_date(path, cfg, mode, seed):
    if not Path(path).is_file():
        return False
    meta = read_comment_metadata(path)
    return (meta.get("config_hash") == cfg.config_hash() and meta.get("mode") == mode
            and meta.get("seed") == str(seed))


def train_stage(cfg, mode, seed, split=None, info=None):
    run = cfg.run_dir(mode, seed)
    ckpt, loss_csv = run / "model.ckpt", run / "loss.csv"
    if ckpt.is_file() and _up_to_date(loss_csv, cfg, mode, seed):
        log.info("%s is up to date", ckpt)
        return ckpt
    if split is None:
        info, split = _dataset(cfg)
    tcfg = cfg.training_config(mode, seed, info["image_size"])
    run.mkdir(parents=True, exist_ok=True)
    log.info("training mode=%s seed=%d epochs=%d", mode, seed, tcfg.epochs)
    start = time.perf_counter()
    result = train(tcfg, split.train_normal, n_domains=info["n_domains"])
    meta = {"config_hash": cfg.config_hash(), "dataset_hash": cfg.dataset_hash(), "mode": mode, "seed": seed,
            "epochs": tcfg.epochs if mode != "raw_encoder" else 0, "n_domains": info["n_domains"]}
    _atomic_write(ckpt, checkpoint.dumps(result.model.state_dict(), meta))
    buf = run / "loss.csv.tmp"
    write_loss_csv(buf, result.history, _meta_line(cfg, mode, seed))
    os.replace(buf, loss_csv)
    _record_time(run, "train", time.perf_counter() - start)
    return ckpt


def load_model(cfg, mode, seed, image_size):
    ckpt = cfg.run_dir(mode, seed) / "model.ckpt"
    if not ckpt.is_file():
        raise StageError(f"missing checkpoint {ckpt} (run 'train' first)")
    state, meta = checkpoint.load(ckpt)
    if meta.get("config_hash") != cfg.config_hash():
        raise StageError(f"{ckpt} was trained under config {meta.get('config_hash')}, "
                         f"current config is {cfg.config_hash()}")
    model = Model(cfg.training_config(mode, seed, image_size), meta["n_domains"])
    model.load_state_dict(state)
    return model


def score_stage(cfg, mode, seed, split=None, info=None):
    run = cfg.run_dir(mode, seed)
    path = run / "scores.csv"
    if _up_to_date(path, cfg, mode, seed):
        log.info("%s is up to date", path)
        return path
    if split is None:
        info, split = _dataset(cfg)
    start = time.perf_counter()
    model = load_model(cfg, mode, seed, info["image_size"])
    bank = build_bank(model.encoder, split.train_normal)
    scored = score_split(model.encoder, bank, split.test_samples(), cfg.k)
    tmp = run / "scores.csv.tmp"
    write_scores(tmp, scored, _meta_line(cfg, mode, seed))
    os.replace(tmp, path)
    _record_time(run, "score", time.perf_counter() - start)
    return path


def evaluate_stage(cfg, mode, seed):
    run = cfg.run_dir(mode, seed)
    path = run / "scores.csv"
    if not path.is_file():
        raise StageError(f"missing scores {path} (run 'score' first)")
    meta = read_comment_metadata(path)
    if meta.get("dataset_hash") != cfg.dataset_hash() or meta.get("config_hash") != cfg.config_hash():
        raise StageError(f"{path} carries config {meta.get('config_hash')} / dataset {meta.get('dataset_hash')}, "
                         f"expected {cfg.config_hash()} / {cfg.dataset_hash()}")
    out = run / "report.json"
    existing = _read_json(out)
    report = compute_report(read_scores(path), cfg.config_hash(), seed, mode)
    report.extra = {"dataset_hash": cfg.dataset_hash(), "k": cfg.k}
    text = report.to_json()
    if existing is None or out.read_text() != text:
        _atomic_write(out, text)
        _atomic_write(run / "report.txt", f"# {_meta_line(cfg, mode, seed)}\n" + report.table())
    return report


def run_all(cfg, modes=None, seeds=None):
    """Every stage for every (mode, seed); returns the list of reports."""
    generate(cfg)
    info, split = _dataset(cfg)
    reports = []
    for mode in modes or cfg.modes:
        for seed in seeds if seeds is not None else cfg.seeds:
            train_stage(cfg, mode, seed, split, info)
            score_stage(cfg, mode, seed, split, info)
            reports.append(evaluate_stage(cfg, mode, seed))
    return reports


# ---------------------------------------------------------------- report

def collect_reports(paths):
    """Find report.json files under the given run directories (recursively)."""
    found = []
    for p in map(Path, paths):
        if p.is_file() and p.name == "report.json":
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(p.rglob("report.json")))
        else:
            raise StageError(f"no such run directory: {p}")
    if not found:
        raise StageError(f"no report.json found under {', '.join(map(str, paths))}")
    return [ScoreReport.from_dict(json.loads(f.read_text())) for f in found]


def summarize(reports):
    """Per-mode mean and sample standard deviation (0 for a single seed)."""
    hashes = {r.extra.get("dataset_hash") for r in reports}
    if len(hashes) > 1:
        raise StageError(f"reports mix incompatible dataset hashes: {sorted(map(str, hashes))}")
    order = [m for m in MODES if any(r.mode == m for r in reports)]
    order += sorted({r.mode for r in reports} - set(order))
    rows = []
    for mode in order:
        group = [r for r in reports if r.mode == mode]
        row = {"mode": mode, "n": len(group), "seeds": sorted(r.seed for r in group)}
        for key in ("ad_score", "pa_score", "ra_score"):
            vals = np.array([getattr(r, key) for r in group])
            row[key] = float(vals.mean())
            row[key + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def render_summary(rows):
    table = format_table([
        (f"{r['mode']} (n={r['n']})",) + tuple(f"{r[k]:.3f} ± {r[k + '_std']:.3f}"
                                             for k in ("ad_score", "pa_score", "ra_score"))
        for r in rows
    ])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "n", "ad_mean", "ad_std", "pa_mean", "pa_std", "ra_mean", "ra_std"])
    for r in rows:
        w.writerow([r["mode"], r["n"]] + [f"{r[k + s]:.3f}" for k in ("ad_score", "pa_score", "ra_score")
                                          for s in ("", "_std")])
    return table, buf.getvalue()
