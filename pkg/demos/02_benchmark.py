"""
The synthetic benchmark
=======================

Ten glyph classes drawn in four rendering styles. The style (nuisance)
changes pixels far more than the glyph does, and one (style, glyph) pair per
style is held out of training: those are the pseudo-anomalies a good
detector should not flag.
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from redpanda.synthdata import DOMAINS, GLYPHS, BenchmarkSpec, build_benchmark, render_sample, to_uint8

out = Path(sys.argv[1] if len(sys.argv) > 1 else "benchmark_grid.png")

# one row per style, one column per glyph
rows = [np.concatenate([render_sample((c, 1, 4), d, seed=c, image_size=48) for c in range(len(GLYPHS))], axis=1)
        for d in range(len(DOMAINS))]
Image.fromarray(to_uint8(np.concatenate(rows, axis=0))).save(out)
print("styles :", ", ".join(DOMAINS))
print("glyphs :", ", ".join(GLYPHS))
print("grid written to", out)

spec = BenchmarkSpec(image_size=32)
print("\n" + spec.to_text())
split = build_benchmark(spec)
for role, n in split.counts().items():
    print(f"{role:<14} {n:>5}")

# pixel distance: same glyph in another style vs another glyph in the same style
a = render_sample((0, 1, 4), 0, seed=1, image_size=32)
b = render_sample((0, 1, 4), 1, seed=1, image_size=32)
c = render_sample((5, 1, 4), 0, seed=1, image_size=32)
print("\n|same glyph, other style|  =", round(float(np.linalg.norm(a - b)), 2))
print("|other glyph, same style|  =", round(float(np.linalg.norm(a - c)), 2))
