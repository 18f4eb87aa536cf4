"""Bagged decision-tree ensembles and their on-disk container."""
from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .tree import Binner, Tree, fit_tree

MAGIC = b"DMBT"
FORMAT_VERSION = 1


class TrainingError(ValueError):
    pass


@dataclass
class Hyperparams:
    n_trees: int = 50
    max_depth: int = 12
    min_leaf: int = 5
    max_bins: int = 255
    bootstrap: bool = True
    workers: int = 1


def catalog_hash(names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(names).encode("utf-8")).hexdigest()


@dataclass
class Model:
    task: str
    n_classes: int
    feature_names: tuple
    trees: list[Tree]
    hyperparams: Hyperparams
    seed: int
    class_names: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def catalog_hash(self) -> str:
        return catalog_hash(self.feature_names)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        X = np.ascontiguousarray(X)
        total = np.zeros((X.shape[0], self.n_classes))
        for t in self.trees:
            total += t.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax keeps the first maximum: ties go to the lower class index
        return np.argmax(self.predict_proba(X), axis=1)


def train(
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    feature_names: Sequence[str],
    hyperparams: Hyperparams | None = None,
    seed: int = 0,
    n_classes: int | None = None,
    class_names: Sequence[str] = (),
) -> Model:
    """Fit `n_trees` trees, tree i on a bootstrap drawn with seed ``seed + i``."""
    hp = hyperparams or Hyperparams()
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[1] != len(feature_names):
        raise ValueError("feature names do not match X")
    if np.unique(y).size < 2:
        raise TrainingError("training labels contain a single class")
    n_classes = int(n_classes or y.max() + 1)
    binner = Binner.fit(X, hp.max_bins)
    Xb = binner.transform(X)
    n = X.shape[0]

    def one(i: int) -> Tree:
        if hp.bootstrap:
            rng = np.random.default_rng(seed + i)
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        else:
            w = np.ones(n)
        return fit_tree(Xb, y, binner, n_classes, w, hp.max_depth, hp.min_leaf)

    if hp.workers > 1:
        with ThreadPoolExecutor(hp.workers) as pool:
            trees = list(pool.map(one, range(hp.n_trees)))
    else:
        trees = [one(i) for i in range(hp.n_trees)]
    return Model(task, n_classes, tuple(feature_names), trees, hp, seed, tuple(class_names))


def predict(model: Model, vector) -> tuple[int, np.ndarray]:
    """Class and averaged probability vector for one feature vector."""
    v = np.asarray(vector, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a single feature vector")
    p = model.predict_proba(v)[0]
    return int(np.argmax(p)), p


# -- persistence ---------------------------------------------------------------
# Layout (little-endian):
#   b"DMBT", uint16 version, uint32 header length, UTF-8 JSON header
#   (task, catalog hash, feature names, n_trees, n_classes, hyperparams, seed)
#   then per tree: uint32 n_nodes, int32 feature[n], float64 threshold[n],
#   uint8 missing_left[n], int32 left[n], int32 right[n],
#   float64 value[n * n_classes].

def save_model(model: Model, path: str | Path) -> None:
    header = {
        "task": model.task,
        "catalog_hash": model.catalog_hash,
        "feature_names": list(model.feature_names),
        "class_names": list(model.class_names),
        "n_trees": model.n_trees,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "hyperparams": model.hyperparams.__dict__,
        "meta": model.meta,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for t in model.trees:
            fh.write(struct.pack("<I", t.n_nodes))
            fh.write(t.feature.astype("<i4").tobytes())
            fh.write(t.threshold.astype("<f8").tobytes())
            fh.write(t.missing_left.astype("u1").tobytes())
            fh.write(t.left.astype("<i4").tobytes())
            fh.write(t.right.astype("<i4").tobytes())
            fh.write(t.value.astype("<f8").tobytes())


def load_model(path: str | Path) -> Model:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    pos = 10
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    if catalog_hash(header["feature_names"]) != header["catalog_hash"]:
        raise ValueError(f"{path}: catalog hash mismatch")
    C = header["n_classes"]
    trees = []

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    for _ in range(header["n_trees"]):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        feature = take("<i4", n).astype(np.int64)
        threshold = take("<f8", n).astype(float)
        ml = take("u1", n).astype(bool)
        left = take("<i4", n).astype(np.int64)
        right = take("<i4", n).astype(np.int64)
        value = take("<f8", n * C).astype(float).reshape(n, C)
        trees.append(Tree(feature, threshold, ml, left, right, value))
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes")
    return Model(
        header["task"], C, tuple(header["feature_names"]), trees,
        Hyperparams(**header["hyperparams"]), header["seed"], tuple(header["class_names"]),
        header.get("meta", {}),
    )
