"""Machine-readable result documents and plot-data files.

Every run produces one self-describing JSON document (validating against
the schema shipped in ``mixmem/schemas/result_schema.json``) plus flat
comma-delimited plot files. Each plot file starts with ``#``-prefixed
metadata lines carrying at least the seed and the hash of the resolved
configuration, so any figure can be traced back to the run that made it.
No timestamps are embedded: identical inputs yield byte-identical files.
"""

import csv
import hashlib
import json
from importlib import resources

import numpy as np

__all__ = [
    "config_hash",
    "write_result",
    "load_result",
    "load_schema",
    "validate_result",
    "write_plot_csv",
    "format_profile_set",
]

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def config_hash(config):
    """Short stable hash of a resolved configuration mapping."""
    canonical = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def write_result(path, kind, seed, config, results):
    """Write a result document; returns the embedded config hash."""
    config = _jsonable(config)
    document = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": None if seed is None else int(seed),
        "config": config,
        "config_hash": config_hash(config),
        "results": _jsonable(results),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return document["config_hash"]


def load_result(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_schema():
    """The published result-document schema shipped with the package."""
    text = resources.files("mixmem").joinpath("schemas/result_schema.json").read_text()
    return json.loads(text)


def validate_result(document):
    """Validate a result document against the published schema."""
    import jsonschema

    jsonschema.validate(document, load_schema())


def write_plot_csv(path, columns, rows, meta):
    """Write a plot-data file: '#' metadata lines, header, then rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(list(row))


def format_profile_set(labels):
    """Render a profile set as '{a,b}' for table headers."""
    return "{" + ",".join(str(int(v)) for v in labels) + "}"
