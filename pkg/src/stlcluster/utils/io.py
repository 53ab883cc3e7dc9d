"""File I/O utilities for pipeline artifacts.

Provides JSON, JSON-lines and CSV serialization, versioned weight documents for
torch modules, and content hashes used by stage caching.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import torch

WEIGHTS_FORMAT_VERSION = 1


def save_json(data: dict[str, Any], file_path: str | Path) -> None:
    """Save data to JSON file.

    Keys are sorted so identical data always produces identical bytes.

    Args:
        data: Dictionary to serialize
        file_path: Path to output file

    Raises:
        IOError: If file cannot be written
    """
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def load_json(file_path: str | Path) -> dict[str, Any]:
    """Load data from JSON file.

    Args:
        file_path: Path to input file

    Returns:
        Deserialized dictionary

    Raises:
        FileNotFoundError: If file does not exist
        json.JSONDecodeError: If file is not valid JSON
    """
    with open(Path(file_path)) as f:
        return json.load(f)


def save_jsonl(records: Iterable[dict[str, Any]], file_path: str | Path) -> int:
    """Write one JSON object per line.

    Args:
        records: Objects to serialize
        file_path: Path to output file

    Returns:
        Number of lines written
    """
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    count = 0
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True))
            f.write("\n")
            count += 1
    return count


def load_jsonl(file_path: str | Path) -> list[dict[str, Any]]:
    """Read a JSON-lines file, skipping blank lines."""
    with open(Path(file_path)) as f:
        return [json.loads(line) for line in f if line.strip()]


def save_csv(
    rows: Iterable[Sequence[Any]], header: Sequence[str], file_path: str | Path
) -> None:
    """Write rows to a CSV file with a header line.

    ``None`` cells are written as empty strings.
    """
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if cell is None else cell for cell in row])


def load_csv(file_path: str | Path) -> list[dict[str, str]]:
    """Read a CSV file with a header line into dictionaries."""
    with open(Path(file_path), newline="") as f:
        return list(csv.DictReader(f))


def file_exists(file_path: str | Path) -> bool:
    """Check if file exists.

    Args:
        file_path: Path to check

    Returns:
        True if file exists, False otherwise
    """
    return Path(file_path).exists()


def canonical_hash(data: Any) -> str:
    """SHA-256 of the canonical JSON encoding of ``data``."""
    encoded = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(encoded.encode()).hexdigest()


def file_hash(file_path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(Path(file_path), "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def module_to_document(
    module: torch.nn.Module, kind: str, metadata: dict[str, Any] | None = None
) -> dict[str, Any]:
    """Encode a module's state dict as a versioned JSON document.

    Each tensor is stored as its shape plus a flat row-major list of floats.

    Args:
        module: Module whose parameters and buffers are saved
        kind: Document kind tag checked on load (e.g. "classifier")
        metadata: Constructor arguments and other context needed to rebuild it

    Returns:
        JSON-serializable dictionary
    """
    layers = {
        name: {
            "shape": list(tensor.shape),
            "data": tensor.detach().to(torch.float64).reshape(-1).tolist(),
        }
        for name, tensor in module.state_dict().items()
    }
    return {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "kind": kind,
        "metadata": metadata or {},
        "layers": layers,
    }


def load_state_from_document(module: torch.nn.Module, document: dict[str, Any], kind: str) -> None:
    """Load tensors from a weight document into ``module`` in place.

    Raises:
        ValueError: If the document version or kind does not match
    """
    if document.get("format_version") != WEIGHTS_FORMAT_VERSION:
        raise ValueError(
            f"Unsupported weights format version: {document.get('format_version')}"
        )
    if document.get("kind") != kind:
        raise ValueError(f"Expected a '{kind}' weights document, got '{document.get('kind')}'")

    state = {
        name: torch.tensor(layer["data"], dtype=torch.float64).reshape(layer["shape"])
        for name, layer in document["layers"].items()
    }
    module.load_state_dict(state)
