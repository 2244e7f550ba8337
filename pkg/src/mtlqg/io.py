"""CSV/JSON persistence with full-precision, reproducible formatting.

Every CSV gets a JSON sidecar recording the generating config, its sha256
hash, and the seed, so identical inputs can be verified to yield identical
bytes.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def format_value(value) -> str:
    """Floats in scientific notation with 17 significant digits; rest as str."""
    if isinstance(value, (float, np.floating)):
        return f"{value:.16e}"
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def write_sidecar(csv_path, config: dict, seed) -> None:
    """JSON metadata sidecar next to a CSV output."""
    doc = {"config": config, "config_sha256": config_hash(config), "seed": seed}
    with open(str(csv_path) + ".meta.json", "w") as fh:
        json.dump(doc, fh, indent=1, default=str)


def save_controller(path, ktilde, meta: dict | None = None) -> None:
    doc = {"schema": "mtlqg-controller-v1", "p": int(ktilde.p),
           "K": np.asarray(ktilde.K).tolist(), "meta": meta or {}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_controller(path):
    from .lifting import LiftedController

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "mtlqg-controller-v1":
        from .errors import ValidationError

        raise ValidationError(f"unexpected controller schema: {doc.get('schema')!r}")
    return LiftedController(K=np.array(doc["K"], dtype=float), p=int(doc["p"]))


def save_certificates_json(path, pair_rows, matrices=None) -> None:
    """Pairwise certificates; ``matrices`` maps (i, j) -> M when kept."""
    doc = {"schema": "mtlqg-certificates-v1", "pairs": []}
    for row in pair_rows:
        entry = dict(row)
        if matrices is not None:
            key = (row["task_i"], row["task_j"])
            if key in matrices:
                entry["M"] = np.asarray(matrices[key]).tolist()
        doc["pairs"].append(entry)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=float)


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
