"""
Run outputs: CSV tables, JSON documents, binary snapshots and checksums.

Every file written through a RunStore is checksummed so the manifest can
list it; writes are serialised through the store.
"""
import csv
import hashlib
import json
import logging
import threading
from pathlib import Path

import numpy as np

from errors import ConfigError

logger = logging.getLogger(__name__)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config):
    """SHA-256 of the canonical JSON form of a config"""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _plain(value):
    """numpy scalars and arrays to JSON-friendly Python values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


class RunStore:
    """Output directory of one run"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self._lock = threading.Lock()

    def path(self, name):
        return self.out_dir / name

    def _record(self, name):
        self.files[name] = sha256_file(self.path(name))
        logger.info(f"Wrote {self.path(name)}")

    def write_csv(self, name, header, rows):
        """UTF-8 CSV with a header row and LF line endings"""
        with self._lock:
            with open(self.path(name), "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_plain(v) for v in row])
            self._record(name)
        return self.path(name)

    def write_json(self, name, data):
        with self._lock:
            with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
                json.dump(_plain(data), f, sort_keys=True, indent=2)
                f.write("\n")
            self._record(name)
        return self.path(name)

    def write_snapshot(self, name, positions, **meta):
        """Flat little-endian float64 array plus a JSON sidecar (N, d and ``meta``)"""
        positions = np.asarray(positions, dtype="<f8")
        with self._lock:
            positions.tofile(self.path(name))
            self._record(name)
        sidecar = {"N": positions.shape[0], "d": positions.shape[1] if positions.ndim > 1 else 1, **meta}
        self.write_json(f"{name}.json", sidecar)
        return self.path(name)

    def checksums(self):
        return dict(sorted(self.files.items()))


def read_snapshot(path):
    """Positions and sidecar of a snapshot written by RunStore.write_snapshot"""
    path = Path(path)
    meta = read_json(path.with_name(path.name + ".json"))
    positions = np.fromfile(path, dtype="<f8").reshape(meta["N"], meta["d"])
    return positions, meta


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def read_table(path):
    """
    Two-column CSV (x, value) for tabulated potentials. A non-numeric first
    row is taken as a header.

    Returns:
        (x, values) float arrays
    """
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        for i, row in enumerate(csv.reader(f)):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ConfigError(f"{path}: row {i + 1} is not a pair of numbers: {row}")
    if not rows:
        raise ConfigError(f"{path}: table is empty")
    data = np.asarray(rows)
    return data[:, 0], data[:, 1]
