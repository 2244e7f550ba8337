"""CSV loading with schema validation for the documented mtlqg headers."""

import csv


class SchemaError(ValueError):
    """Input CSV does not match the documented header or is empty."""


def read_columns(path, required):
    """Read a CSV into {column: list[str]}, requiring the given columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing} in {header}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    idx = {c: header.index(c) for c in header}
    return {c: [row[idx[c]] for row in rows] for c in header}


def save_figure(fig, out_path):
    """Write PNG and PDF siblings of ``out_path`` (extension ignored)."""
    import matplotlib

    base = str(out_path)
    for ext in (".png", ".pdf"):
        target = base[:-4] + ext if base.endswith((".png", ".pdf")) else base + ext
        # strip volatile PDF metadata so identical inputs give identical bytes
        metadata = {"CreationDate": None} if ext == ".pdf" else None
        fig.savefig(target, dpi=150, metadata=metadata)
    return [base[:-4] + e if base.endswith((".png", ".pdf")) else base + e
            for e in (".png", ".pdf")]
