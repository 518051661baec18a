"""Run manifests: the provenance record written beside every artifact.

A manifest holds everything needed to reproduce its artifact: the
subcommand and arguments, the full effective config with per-section
provenance, the seeds in play, library versions, and the SHA-256 of each
output file. No wall-clock time or machine identity goes in, so a
faithful re-run reproduces artifacts byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

import numpy
import scipy

from spad import __version__
from spad.errors import DataError

MANIFEST_SUFFIX = ".manifest.json"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    return Path(str(artifact) + MANIFEST_SUFFIX)


def versions() -> dict:
    return {
        "spad": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def write_manifest(
    artifact: str | Path,
    command: str,
    argv: list[str],
    config: dict,
    config_origin: dict[str, str],
    seeds: dict[str, int],
    extra_outputs: list[str | Path] = (),
) -> Path:
    """Write ``<artifact>.manifest.json`` and return its path.

    ``extra_outputs`` lists sibling files produced by the same run (for
    example rendered figures); each gets hashed alongside the artifact.
    """
    artifact = Path(artifact)
    outputs = {}
    for out in [artifact, *map(Path, extra_outputs)]:
        if not out.exists():
            raise DataError(f"cannot hash missing output {out}")
        outputs[out.name] = file_sha256(out)
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "config_origin": config_origin,
        "seeds": seeds,
        "versions": versions(),
        "outputs": outputs,
    }
    path = manifest_path(artifact)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(artifact_or_manifest: str | Path) -> dict:
    """Load a manifest given either its own path or its artifact's."""
    p = Path(artifact_or_manifest)
    if not str(p).endswith(MANIFEST_SUFFIX):
        p = manifest_path(p)
    if not p.exists():
        raise DataError(f"manifest not found: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def verify_outputs(manifest: dict, directory: str | Path) -> list[str]:
    """Names of recorded outputs whose current hash disagrees."""
    directory = Path(directory)
    stale = []
    for name, digest in manifest["outputs"].items():
        target = directory / name
        if not target.exists() or file_sha256(target) != digest:
            stale.append(name)
    return stale
