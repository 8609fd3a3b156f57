"""Regenerates the metric fixture pairs and their frozen reference values.

Values come from scikit-image (data_range=1, Gaussian window sigma=1.5,
population covariance), computed on the 8-bit images scaled to [0, 1].
"""
import json
import pathlib

import numpy as np
from PIL import Image
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

here = pathlib.Path(__file__).parent
rng = np.random.default_rng(20240611)
records = []
for i in range(10):
    h, w = [(24, 24), (32, 20), (16, 40), (28, 28), (12, 12)][i % 5]
    yy, xx = np.mgrid[0:h, 0:w]
    base = np.stack([0.5 + 0.4 * np.sin(xx / (2 + c + i % 3) + yy / (3 + c)) for c in range(3)], axis=-1)
    clean = np.clip(base + 0.05 * rng.standard_normal(base.shape), 0, 1)
    dist = np.clip(clean + (0.02 + 0.02 * i) * rng.standard_normal(base.shape) + 0.01 * i, 0, 1)
    a = np.round(clean * 255).astype(np.uint8)
    b = np.round(dist * 255).astype(np.uint8)
    if i == 9:
        b = a.copy()
    Image.fromarray(a).save(here / f"pair{i}_a.png")
    Image.fromarray(b).save(here / f"pair{i}_b.png")
    fa, fb = a / 255.0, b / 255.0
    p = float(peak_signal_noise_ratio(fa, fb, data_range=1.0)) if i != 9 else None
    s = float(structural_similarity(fa, fb, data_range=1.0, channel_axis=-1, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False))
    records.append({"a": f"pair{i}_a.png", "b": f"pair{i}_b.png", "psnr": p, "ssim": s})
(here / "metrics.json").write_text(json.dumps(records, indent=1) + "\n")
