"""On-disk datasets: one JSON file per problem instance plus a manifest.

Layout::

    <root>/manifest.json
    <root>/train/000000.json ...
    <root>/test/000000.json ...

Instance ``i`` of the train split uses seed ``base_seed + i``; test instances
continue the count (``base_seed + n_train + j``) so the splits never share a
seed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Sequence

from ..problems import ObjectiveProblem, ProblemFormatError, generate, load_problem, save_problem
from .config import ConfigError, ExperimentConfig

__all__ = ["DatasetError", "Dataset", "Split", "generate_dataset", "load_dataset", "MANIFEST"]

MANIFEST = "manifest.json"
SPLITS = ("train", "test")


class DatasetError(RuntimeError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_dataset(cfg: ExperimentConfig, out) -> Path:
    """Write every instance and the manifest; returns the manifest path."""
    root = Path(out)
    files = {}
    counts = {"train": cfg.n_train, "test": cfg.n_test}
    offset = 0
    for split in SPLITS:
        (root / split).mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(counts[split]):
            seed = cfg.seed + offset + i
            rel = f"{split}/{i:06d}.json"
            save_problem(generate(cfg.family, cfg.dims, seed), root / rel)
            entries.append({"file": rel, "seed": seed, "sha256": _sha256(root / rel)})
        files[split] = entries
        offset += counts[split]
    manifest = {
        "schema": 1,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "family": cfg.family.value,
        "splits": files,
    }
    path = root / MANIFEST
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


class Split(Sequence):
    """Lazily loaded, cached list of problems from one split."""

    def __init__(self, root: Path, entries: List[dict], check_hash: bool = True):
        self.root = root
        self.entries = entries
        self.check_hash = check_hash
        self._cache = {}

    def __len__(self):
        return len(self.entries)

    def path(self, i: int) -> Path:
        return self.root / self.entries[i]["file"]

    def seed(self, i: int) -> int:
        return int(self.entries[i]["seed"])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i not in self._cache:
            self._cache[i] = self.load(i)
        return self._cache[i]

    def load(self, i: int) -> ObjectiveProblem:
        path = self.path(i)
        if not path.exists():
            raise DatasetError(f"{path}: instance file missing")
        if self.check_hash and _sha256(path) != self.entries[i]["sha256"]:
            # still parse first so structural damage gets the more specific message
            load_problem(path)
            raise ProblemFormatError(f"{path}: checksum does not match the manifest")
        return load_problem(path)


class Dataset:
    def __init__(self, root, manifest: dict):
        self.root = Path(root)
        self.manifest = manifest
        self.config = ExperimentConfig.from_dict(manifest["config"])
        self.train = Split(self.root, manifest["splits"].get("train", []))
        self.test = Split(self.root, manifest["splits"].get("test", []))

    @property
    def family(self) -> str:
        return self.manifest["family"]

    def __len__(self):
        return len(self.train) + len(self.test)


def load_dataset(root) -> Dataset:
    root = Path(root)
    path = root / MANIFEST
    if not path.exists():
        if root.is_dir() and not any(root.rglob("*.json")):
            raise DatasetError(f"{root}: no instances")
        raise DatasetError(f"{path}: manifest not found")
    try:
        manifest = json.loads(path.read_text())
        if manifest.get("schema") != 1 or "splits" not in manifest or "config" not in manifest:
            raise DatasetError(f"{path}: unsupported or malformed manifest")
        ds = Dataset(root, manifest)
    except (json.JSONDecodeError, UnicodeDecodeError, AttributeError, KeyError, TypeError, ConfigError) as exc:
        raise DatasetError(f"{path}: malformed manifest ({exc})") from exc
    if len(ds) == 0:
        raise DatasetError(f"{root}: no instances")
    return ds
