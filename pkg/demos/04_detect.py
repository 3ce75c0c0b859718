"""
Train, score, evaluate
======================

A short training run on a small benchmark, followed by kNN scoring and the
three evaluation scores:

  AD  anomalies vs everything else       (higher is better)
  PA  pseudo-anomalies vs familiar       (0.5 is ideal)
  RA  anomalies vs pseudo-anomalies      (higher is better)

This is a few-minute illustration, not the acceptance experiment; see
configs/acceptance.ini for that.
"""
import time

from redpanda.metrics import compute_report, format_table
from redpanda.scorer import build_bank, score_split
from redpanda.synthdata import BenchmarkSpec, build_benchmark
from redpanda.training import TrainingConfig, train

split = build_benchmark(BenchmarkSpec(per_cell=30, image_size=32))
rows = []
for mode, epochs in (("raw_encoder", 0), ("simclr_global", 8), ("redpanda", 8)):
    cfg = TrainingConfig(mode=mode, epochs=epochs, image_size=32, lr_encoder=1e-3, lr_generator=3e-3,
                         encoder_channels=(16, 32, 64, 128), generator_channels=(64, 32, 16),
                         perceptual_channels=(8, 16, 32))
    t0 = time.time()
    result = train(cfg, split.train_normal, n_domains=4)
    bank = build_bank(result.model.encoder, split.train_normal)
    report = compute_report(score_split(result.model.encoder, bank, split.test_samples(), k=1), mode=mode)
    rows.append((mode, report.ad_score, report.pa_score, report.ra_score))
    print(f"{mode}: {time.time() - t0:.0f}s")
print()
print(format_table(rows))
