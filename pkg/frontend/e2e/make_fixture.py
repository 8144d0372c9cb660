"""Builds the e2e fixture: image pools plus a loadable stage-2 checkpoint."""
import sys
from pathlib import Path

import numpy as np

from floorgen.config import build_config
from floorgen.images import save_png
from floorgen.pipeline import Pipeline

root = Path(sys.argv[1])
rng = np.random.default_rng(0)
for group in ("real", "gen"):
    d = root / group
    d.mkdir(parents=True, exist_ok=True)
    for i in range(16):
        save_png(d / f"{group}_{i:03d}.png",
                 rng.integers(0, 256, (24, 24, 3), dtype=np.uint8))

cfg = build_config(None, profile="desk")
pipe = Pipeline.build(cfg)
pipe.attach_control()
pipe.save(root / "stage2.pt", stage="stage2")
print("fixture ready", root)
