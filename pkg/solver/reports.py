"""CSV artifacts, run manifests and config hashing."""
import hashlib
import json
import logging
import platform
from pathlib import Path

import numpy as np
import scipy
import tablib
import torch

logger = logging.getLogger(__name__)


def format_float(value):
    """17 significant digits: enough to round-trip any float64."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def dataset(headers, rows):
    data = tablib.Dataset(headers=list(headers))
    for row in rows:
        data.append([v if isinstance(v, str) else format_float(v) for v in row])
    return data


def write_csv(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(data.export("csv"))
    logger.debug("wrote %s (%d rows)", path, data.height)
    return path


def loss_history_dataset(history):
    """Per-epoch loss terms: epoch, pde_j..., dbc_j..., nbc_j..., [ic,] total."""
    if not history:
        return tablib.Dataset(headers=["epoch", "total"])
    first = history[0]
    p = len(first.pde)
    headers = ["epoch"]
    headers += [f"pde_{j + 1}" for j in range(p)]
    headers += [f"dbc_{j + 1}" for j in range(p)]
    headers += [f"nbc_{j + 1}" for j in range(p)]
    if first.initial is not None:
        headers.append("ic")
    headers.append("total")
    return dataset(headers, ([epoch, *entry.as_row()] for epoch, entry in enumerate(history, start=1)))


def canonical_json(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def library_versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "torch": torch.__version__,
    }


def write_manifest(path, entries):
    """Flat ``key = value`` text file; nested values are stored as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key in sorted(entries):
        value = entries[key]
        if isinstance(value, (dict, list, tuple)):
            value = canonical_json(value)
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path):
    entries = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition(" = ")
            entries[key] = value
    return entries
