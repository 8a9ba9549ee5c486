"""File formats: matrix CSVs, dataset bundles, tree JSON and key=value configs.

Matrices are CSV with a header row; the first column holds row ids.  Values
are written with 17 significant digits, which round-trips float64 exactly.
Every writer goes through a temp file and ``os.replace``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from tgslmm.core import DataSet, EffectMatrix, KinshipMatrix, TgslmmError
from tgslmm.tree import ResponseTree, build_tree, compute_weights

BUNDLE_FILES = ("X.csv", "Y.csv", "beta_truth.csv", "labels.csv", "centroids.csv", "meta.json")


class DataIOError(TgslmmError):
    pass


class ConfigParse(TgslmmError):
    pass


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{path}: invalid JSON ({exc})") from exc


def write_matrix_csv(path, M, row_ids: Iterable[str], col_ids: Iterable[str], corner: str = "id") -> None:
    M = np.asarray(M, dtype=np.float64)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *col_ids])
    for rid, row in zip(row_ids, M):
        w.writerow([rid, *(fmt(v) for v in row)])
    atomic_write_text(path, buf.getvalue())


def read_matrix_csv(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Return ``(matrix, row_ids, col_ids)``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file: {path}") from exc
    if not rows:
        raise DataIOError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    ncol = len(header) - 1
    data = np.empty((len(body), ncol))
    row_ids = []
    for i, row in enumerate(body):
        if len(row) != ncol + 1:
            raise DataIOError(f"{path}: line {i + 2} has {len(row) - 1} values, expected {ncol}")
        row_ids.append(row[0])
        try:
            data[i] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DataIOError(f"{path}: line {i + 2}: {exc}") from exc
    return data, row_ids, header[1:]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


# -- config --------------------------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParse(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigParse(f"{source}:{lineno}: empty key")
        out[key] = val
    return out


def read_config(path: Optional[os.PathLike]) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file: {path}") from exc
    return parse_config_text(text, str(path))


# -- dataset bundle ------------------------------------------------------------

def save_bundle(out_dir, output, meta: dict) -> list[str]:
    """Write a simulated dataset bundle; returns the written paths."""
    out_dir = Path(out_dir)
    ds = output.dataset
    groups = [f"g{j}" for j in range(output.centroids.shape[0])]
    write_matrix_csv(out_dir / "X.csv", ds.X, ds.sample_ids, ds.variable_ids, "sample")
    write_matrix_csv(out_dir / "Y.csv", ds.Y, ds.sample_ids, ds.response_ids, "sample")
    write_matrix_csv(out_dir / "beta_truth.csv", ds.truth.beta, ds.variable_ids, ds.response_ids, "variable")
    write_matrix_csv(out_dir / "centroids.csv", output.centroids, groups, ds.variable_ids, "group")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "label"])
    for sid, lab in zip(ds.sample_ids, output.group_labels):
        w.writerow([sid, int(lab)])
    atomic_write_text(out_dir / "labels.csv", buf.getvalue())
    write_json(out_dir / "meta.json", meta)
    return [str(out_dir / f) for f in BUNDLE_FILES]


def load_dataset(bundle_dir) -> DataSet:
    """Load X.csv, Y.csv and (if present) beta_truth.csv from a bundle."""
    bundle_dir = Path(bundle_dir)
    X, sids, vids = read_matrix_csv(bundle_dir / "X.csv")
    Y, sids_y, rids = read_matrix_csv(bundle_dir / "Y.csv")
    if sids != sids_y:
        raise DataIOError(f"{bundle_dir}: X.csv and Y.csv list different samples")
    truth = None
    if (bundle_dir / "beta_truth.csv").exists():
        truth = load_effects(bundle_dir / "beta_truth.csv")
    return DataSet(X=X, Y=Y, sample_ids=sids, variable_ids=vids, response_ids=rids, truth=truth)


def load_effects(path) -> EffectMatrix:
    B, vids, rids = read_matrix_csv(path)
    return EffectMatrix(B, vids, rids)


def save_effects(path, beta: EffectMatrix) -> None:
    write_matrix_csv(path, beta.beta, beta.variable_ids, beta.response_ids, "variable")


def load_kinship(path, n: Optional[int] = None) -> KinshipMatrix:
    """Read an n x n kinship CSV and check symmetry and positive semi-definiteness."""
    K, rows, cols = read_matrix_csv(path)
    if K.shape[0] != K.shape[1]:
        raise DataIOError(f"{path}: kinship must be square, got {K.shape}")
    if n is not None and K.shape[0] != n:
        raise DataIOError(f"{path}: kinship is {K.shape[0]}x{K.shape[0]} but data has {n} samples")
    km = KinshipMatrix(K)
    d = np.linalg.eigvalsh(km.K)
    if d.min() < -1e-8 * max(d.max(), 0.0):
        raise DataIOError(f"{path}: kinship is not positive semi-definite (min eigenvalue {d.min():g})")
    return km


# -- tree JSON -----------------------------------------------------------------

def tree_to_json(tree: ResponseTree, response_ids) -> dict:
    nodes = []
    for v in tree.nodes:
        rec = {"id": v.id, "children": list(v.children)}
        if v.h is not None:
            rec["h"] = v.h
        if v.response is not None:
            rec["response"] = response_ids[v.response]
        nodes.append(rec)
    return {"nodes": nodes, "roots": list(tree.root_ids)}


def tree_from_json(obj: dict, response_ids) -> ResponseTree:
    """Build and validate a tree whose leaves name responses by id."""
    if not isinstance(obj, dict) or "nodes" not in obj or "roots" not in obj:
        raise DataIOError("tree JSON needs 'nodes' and 'roots'")
    index = {rid: i for i, rid in enumerate(response_ids)}
    records = []
    for rec in obj["nodes"]:
        rec = dict(rec)
        resp = rec.get("response")
        if resp is not None:
            if str(resp) not in index:
                raise DataIOError(f"tree leaf {rec.get('id')} names unknown response {resp!r}")
            rec["response"] = index[str(resp)]
        records.append(rec)
    try:
        tree = build_tree(records, obj["roots"], len(response_ids))
        return compute_weights(tree)
    except (KeyError, TypeError) as exc:
        raise DataIOError(f"malformed tree JSON: {exc}") from exc


def load_tree(path, response_ids) -> ResponseTree:
    return tree_from_json(read_json(path), response_ids)
