"""
Binary files and the command-line pipeline
==========================================

Features and models travel as small self-describing binary files (HERF
for features, HERM for models). This script exercises the whole pipeline
the way a shell user would: generate a dataset, fit, evaluate, absorb an
update batch, re-evaluate, all through the command-line tool, and then
cracks the files open from Python to show the round trip is exact.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from her_reid import load_features, load_model, save_features

work = Path(tempfile.mkdtemp(prefix="pipeline-demo-"))

def her(*args):
    cmd = [sys.executable, "-m", "her_reid.cli"] + [str(a) for a in args]
    out = subprocess.run(cmd, capture_output=True, text=True, cwd=work)
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return out.stdout

print(her("synth", "--identities", 30, "--dim", 10, "--noise", "0.3",
          "--seed", 6, "--out-probe", "probe.herf", "--out-gallery", "gallery.herf"))
print(her("fit", "--features", "probe.herf", "--lambda", "0.5",
          "--out", "model.herm"))
print(her("eval", "--model", "model.herm", "--probe", "probe.herf",
          "--gallery", "gallery.herf", "--ranks", "1,5,10"))

# reports are JSON files written next to each output by default
report = json.loads((work / "model.herm.report.json").read_text())
print("fit report:", {k: report[k] for k in ("samples", "classes", "lambda")})

# the files are tiny: header, dtype tag, dimensions, then raw columns
for name in ("probe.herf", "model.herm"):
    print("%-12s %6d bytes" % (name, (work / name).stat().st_size))

# absorbing a batch through the file interface needs an incremental fit
her("fit", "--features", "probe.herf", "--lambda", "0.5", "--incremental",
    "--out", "tracked.herm")

features = load_features(work / "probe.herf")
rng = np.random.default_rng(0)
batch = features.take(rng.choice(features.sample_count, 4, replace=False))
save_features(batch, work / "batch.herf")
print(her("update", "--model", "tracked.herm", "--batch", "batch.herf"))

# round trips are exact: bytes in, identical arrays out
reloaded = load_features(work / "probe.herf")
assert reloaded.values.tobytes() == features.values.tobytes()
assert np.array_equal(reloaded.labels, features.labels)

model = load_model(work / "model.herm")
print("model file carries: %dx%d projection, lam=%.2f, %d class ids"
      % (model.feature_dim, model.class_count, model.lam, len(model.class_ids)))
print("workdir:", work)
