"""Matplotlib scripts that redraw measured-vs-theory curves from a run directory."""

import csv
import os

from .runner import MANIFEST_FILE, RunManifest


class ManifestError(ValueError):
    pass

_TEMPLATE = '''"""Measured (solid) against theory (dashed) for {scenario}; run from anywhere."""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = {data_files!r}

curves = defaultdict(list)
for name in DATA:
    with open(os.path.join(HERE, name), newline="") as fh:
        for row in csv.DictReader(fh):
            if row["replica"] != "-1" or not row["t"]:
                continue
            theory = float(row["theory"]) if row["theory"] else None
            curves[row["observable"]].append((float(row["t"]), float(row["value"]), theory))

fig, ax = plt.subplots(figsize=(6, 4))
for label, pts in sorted(curves.items()):
    pts.sort()
    t = [p[0] for p in pts]
    line, = ax.plot(t, [p[1] for p in pts], "o-", label=label + " (measured)")
    if all(p[2] is not None for p in pts):
        ax.plot(t, [p[2] for p in pts], "--", color=line.get_color(), label=label + " (theory)")
ax.set_xlabel("t")
ax.set_ylabel("value")
ax.set_title("{scenario}")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{scenario}.png"), dpi=120)
'''


def _curve_labels(path):
    labels = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["replica"] == "-1" and row["t"]:
                labels.add(row["observable"])
    return labels


def emit_plot_script(manifest):
    """Script text for a :class:`RunManifest` or a path to ``manifest.json``.

    The script sits next to the data and refers to it by relative name only.
    """
    if isinstance(manifest, (str, os.PathLike)):
        path = manifest
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_FILE)
        if not os.path.exists(path):
            raise FileNotFoundError(f"no manifest at {path}")
        manifest = RunManifest.load(path)
    data = [f["path"] for f in manifest.files if f["path"].endswith(".csv")]
    if not data:
        raise ManifestError("manifest lists no data files")
    for name in data:
        if not os.path.exists(os.path.join(manifest.output_dir, name)):
            raise FileNotFoundError(f"data file {name} is missing from {manifest.output_dir}")
    scenario = "run"
    for line in manifest.spec_text.splitlines():
        if line.startswith("scenario"):
            scenario = line.split("=", 1)[1].strip()
    return _TEMPLATE.format(scenario=scenario, data_files=data)


def curve_labels(manifest):
    """Observables the script will draw as curves."""
    out = set()
    for p in manifest.data_files():
        out |= _curve_labels(p)
    return out
