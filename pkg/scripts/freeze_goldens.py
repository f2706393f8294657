#!/usr/bin/env python3
"""Freeze golden metric values for the test suite.

Runs the default 4-scale peel on corpus/texture64.png and records the
per-scale gradient correlation computed by a scalar loop written straight
from the metric's definition (independent of the package's vectorized
implementation). Output goes to tests/data/goldens.json.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from hipe.image import load_image  # noqa: E402
from hipe.pipeline import peel  # noqa: E402


def loop_gcc(a: np.ndarray, b: np.ndarray) -> float:
    h, w, c = a.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            for k in range(c):
                ax = a[i, j + 1, k] - a[i, j, k] if j + 1 < w else 0.0
                ay = a[i + 1, j, k] - a[i, j, k] if i + 1 < h else 0.0
                bx = b[i, j + 1, k] - b[i, j, k] if j + 1 < w else 0.0
                by = b[i + 1, j, k] - b[i, j, k] if i + 1 < h else 0.0
                total += abs(ax * bx) + abs(ay * by)
    return total / (2 * h * w * c)


def main() -> None:
    img = load_image(ROOT / "corpus" / "texture64.png")
    hierarchy = peel(img)
    per_scale = []
    for t in range(1, hierarchy.num_scales + 1):
        value = loop_gcc(img - hierarchy.structure(t), hierarchy.structure(t))
        per_scale.append({"t": t, "gcc": value})
    golden = {
        "texture64": {
            "per_scale": per_scale,
            "mean_gcc": math.fsum(row["gcc"] for row in per_scale) / len(per_scale),
        }
    }
    out = ROOT / "tests" / "data" / "goldens.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(golden, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    for row in per_scale:
        print(f"  scale {row['t']}: gcc = {row['gcc']:.6e}")


if __name__ == "__main__":
    main()
