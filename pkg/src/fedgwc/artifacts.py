"""Flat-file artifacts: federation directories, matrices, logs and manifests.

Everything is written as decimal text. Floats use 17 significant digits
so a write/read cycle reproduces them exactly, and JSON is emitted with
sorted keys so equal content means equal bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .datagen import Client, Federation, FederationSpec, GroupSpec
from .errors import ConfigError, MissingInputError, ShapeError
from .training import ClientDataset

FORMAT_VERSION = 1
FEDERATION_MANIFEST = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc.msg}", exc.lineno, str(path)) from None


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing file: {path}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# -- matrices -----------------------------------------------------------------

def format_matrix(M, clients) -> str:
    """Row-major text with a two-line header: size, then client ids."""
    M = np.asarray(M, dtype=np.float64)
    clients = list(clients)
    if M.ndim != 2 or M.shape[0] != len(clients):
        raise ShapeError(f"matrix of shape {M.shape} does not match {len(clients)} clients")
    buf = io.StringIO()
    buf.write(f"# K_c {len(clients)}\n")
    buf.write("# clients " + " ".join(str(c) for c in clients) + "\n")
    np.savetxt(buf, M, fmt="%.17g")
    return buf.getvalue()


def write_matrix(path, M, clients) -> Path:
    path = Path(path)
    path.write_text(format_matrix(M, clients))
    return path


def read_matrix(path):
    """Inverse of :func:`write_matrix`; returns ``(matrix, clients)``."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing matrix file: {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# K_c") or not lines[1].startswith("# clients"):
        raise ShapeError(f"{path} lacks the matrix header")
    k = int(lines[0].split()[2])
    clients = [int(c) for c in lines[1].split()[2:]]
    M = np.loadtxt(lines[2:], ndmin=2) if k else np.zeros((0, 0))
    if M.shape != (k, k) or len(clients) != k:
        raise ShapeError(f"{path}: header says {k} clients, body has shape {M.shape}")
    return M, clients


def write_vector(path, v) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(v, dtype=np.float64), fmt="%.17g")
    return path


def read_vector(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing file: {path}")
    return np.loadtxt(path, ndmin=1)


# -- federations --------------------------------------------------------------

def spec_to_dict(spec: FederationSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["groups"] = [dataclasses.asdict(g) for g in spec.groups]
    return d


def spec_from_dict(d: dict) -> FederationSpec:
    d = dict(d)
    d["groups"] = tuple(GroupSpec(**g) for g in d["groups"])
    return FederationSpec(**d)


def _client_file(cid: int) -> str:
    return f"clients/client_{cid:05d}.csv"


def save_federation(fed: Federation, out_dir) -> Path:
    """One CSV per client (``split,label,x0..``) plus ``manifest.json``."""
    out = Path(out_dir)
    (out / "clients").mkdir(parents=True, exist_ok=True)
    d = fed.spec.d
    header = "split,label," + ",".join(f"x{i}" for i in range(d))
    entries = []
    for c in fed.clients:
        rel = _client_file(c.id)
        rows = []
        for name, ds in (("train", c.train), ("test", c.test)):
            tag = 0 if name == "train" else 1
            rows.append(np.column_stack([np.full(ds.n_k, tag), ds.labels, ds.features]))
        table = np.vstack(rows)
        fmt = ["%d", "%d"] + ["%.17g"] * d
        np.savetxt(out / rel, table, fmt=fmt, delimiter=",", header=header, comments="")
        entries.append({
            "id": c.id,
            "group": c.group,
            "domain": c.domain,
            "histogram": [float(h) for h in c.histogram],
            "n_train": c.train.n_k,
            "n_test": c.test.n_k,
            "file": rel,
            "sha256": sha256_file(out / rel),
        })
    write_json(out / FEDERATION_MANIFEST, {
        "format_version": FORMAT_VERSION,
        "spec": spec_to_dict(fed.spec),
        "clients": entries,
    })
    return out


def load_federation_manifest(fed_dir) -> dict:
    path = Path(fed_dir) / FEDERATION_MANIFEST
    if not path.is_file():
        raise MissingInputError(f"no federation manifest at {path}")
    return read_json(path)


def load_federation(fed_dir, verify: bool = True) -> Federation:
    """Read a directory written by :func:`save_federation`.

    With ``verify`` every client file is checked against its recorded hash.
    """
    fed_dir = Path(fed_dir)
    manifest = load_federation_manifest(fed_dir)
    spec = spec_from_dict(manifest["spec"])
    fed = Federation(spec=spec)
    for entry in sorted(manifest["clients"], key=lambda e: e["id"]):
        path = fed_dir / entry["file"]
        if not path.is_file():
            raise MissingInputError(f"client file missing: {path}")
        if verify and sha256_file(path) != entry["sha256"]:
            raise ConfigError(f"{path} does not match the hash in the manifest")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        split, y, X = table[:, 0], table[:, 1].astype(np.intp), table[:, 2:]
        fed.clients.append(Client(
            id=entry["id"],
            group=entry.get("group"),
            domain=entry.get("domain"),
            histogram=np.array(entry["histogram"]),
            train=ClientDataset(X[split == 0], y[split == 0]),
            test=ClientDataset(X[split == 1], y[split == 1]),
        ))
    if [c.id for c in fed.clients] != list(range(len(fed.clients))):
        raise ShapeError("client ids in the manifest must be 0..K-1")
    return fed


def ground_truth(manifest: dict):
    """Client id -> group label, or None when groups are not recorded."""
    groups = {e["id"]: e.get("group") for e in manifest["clients"]}
    if any(g is None for g in groups.values()):
        return None
    return groups
