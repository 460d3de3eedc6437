"""Multi-modal heterogeneous network data model and its on-disk format.

On disk a dataset is a JSON manifest plus TSV/CSV files:

* nodes: ``node_id<TAB>type_name``
* edges: ``src<TAB>dst<TAB>edge_type_name``
* features: one CSV per modality, row i holds node i; rows of nodes that
  lack the modality natively may be empty
* labels: ``node_id<TAB>category_name``
* split (optional): ``node_id<TAB>train|val|test``
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow


class DatasetError(ValueError):
    """Malformed dataset; the message names the file and row when known."""


class ConfigError(ValueError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MmhnGraph:
    """Typed nodes and typed directed edges ``(src, dst, edge_type)``."""

    node_type_of: np.ndarray
    edges: np.ndarray
    node_type_names: tuple[str, ...]
    edge_type_names: tuple[str, ...]

    def __post_init__(self):
        nt = _frozen(self.node_type_of, np.int64).reshape(-1)
        ed = _frozen(np.asarray(self.edges, dtype=np.int64).reshape(-1, 3), np.int64)
        object.__setattr__(self, "node_type_of", nt)
        object.__setattr__(self, "edges", ed)
        object.__setattr__(self, "node_type_names", tuple(self.node_type_names))
        object.__setattr__(self, "edge_type_names", tuple(self.edge_type_names))
        n = nt.size
        if nt.size and (nt.min() < 0 or nt.max() >= len(self.node_type_names)):
            raise DatasetError("node type id not registered")
        if ed.size:
            if ed[:, :2].min() < 0 or ed[:, :2].max() >= n:
                bad = int(np.flatnonzero((ed[:, :2] < 0).any(1) | (ed[:, :2] >= n).any(1))[0])
                raise DatasetError(f"invalid endpoint in edge row {bad} (graph has {n} nodes)")
            if ed[:, 2].min() < 0 or ed[:, 2].max() >= len(self.edge_type_names):
                raise DatasetError("edge type id not registered")
        if len(self.node_type_names) + len(self.edge_type_names) <= 2:
            raise DatasetError("not heterogeneous: need |node types| + |edge types| > 2")

    @property
    def node_count(self) -> int:
        return int(self.node_type_of.size)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def canonical_edges(self) -> np.ndarray:
        """Edges sorted by (dst, src, edge_type); every downstream computation
        uses this order, so permuting the stored edge list changes nothing."""
        e = self.edges
        order = np.lexsort((e[:, 2], e[:, 0], e[:, 1]))
        out = e[order]
        out.setflags(write=False)
        return out

    @cached_property
    def in_neighbors(self) -> list[list[tuple[int, int]]]:
        nbrs: list[list[tuple[int, int]]] = [[] for _ in range(self.node_count)]
        for s, d, t in self.canonical_edges.tolist():
            nbrs[d].append((s, t))
        return nbrs

    def nodes_of_type(self, type_id: int) -> np.ndarray:
        return np.flatnonzero(self.node_type_of == type_id)

    def with_self_loops(self) -> "MmhnGraph":
        """Copy with a dedicated ``self`` edge type looping on every node."""
        loops = np.stack([np.arange(self.node_count)] * 2 + [np.full(self.node_count, len(self.edge_type_names))], 1)
        return MmhnGraph(self.node_type_of, np.concatenate([self.edges, loops]),
                         self.node_type_names, self.edge_type_names + ("self",))

    def permuted_edges(self, rng: np.random.Generator) -> "MmhnGraph":
        return MmhnGraph(self.node_type_of, self.edges[rng.permutation(self.edge_count)],
                         self.node_type_names, self.edge_type_names)


@dataclass(frozen=True)
class ModalitySchema:
    modality_names: tuple[str, ...]
    native_modalities_of_type: Mapping[int, frozenset[int]]
    input_dim_of_modality: tuple[int, ...]
    target_node_type: int
    categories: tuple[str, ...]
    node_type_count: int

    def __post_init__(self):
        object.__setattr__(self, "modality_names", tuple(self.modality_names))
        object.__setattr__(self, "input_dim_of_modality", tuple(int(d) for d in self.input_dim_of_modality))
        object.__setattr__(self, "categories", tuple(self.categories))
        native = {int(k): frozenset(int(m) for m in v) for k, v in self.native_modalities_of_type.items()}
        object.__setattr__(self, "native_modalities_of_type", native)
        M = len(self.modality_names)
        if M == 0:
            raise ConfigError("need at least one modality")
        if len(self.input_dim_of_modality) != M or any(d <= 0 for d in self.input_dim_of_modality):
            raise ConfigError("every modality needs a positive input dim")
        for o in range(self.node_type_count):
            mods = native.get(o, frozenset())
            if not mods:
                raise ConfigError(f"node type {o} has no native modality")
            if any(m < 0 or m >= M for m in mods):
                raise ConfigError(f"node type {o} lists an unknown modality")
        if not 0 <= self.target_node_type < self.node_type_count:
            raise ConfigError("target node type is not registered")
        if len(self.categories) < 2:
            raise ConfigError("need >= 2 categories")

    @property
    def modality_count(self) -> int:
        return len(self.modality_names)

    def modality_id(self, name: str) -> int:
        try:
            return self.modality_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown modality {name!r}") from None

    def native_mask(self) -> np.ndarray:
        """Boolean [node types x modalities] table of f(o)."""
        mask = np.zeros((self.node_type_count, self.modality_count), dtype=bool)
        for o, mods in self.native_modalities_of_type.items():
            mask[o, sorted(mods)] = True
        return mask

    def presence_for(self, graph: MmhnGraph) -> np.ndarray:
        return self.native_mask()[graph.node_type_of]

    def restricted(self, keep: Sequence[int]) -> "ModalitySchema":
        """Schema over a subset of modalities (node types left without any
        native modality keep all remaining ones as completed slots)."""
        keep = list(keep)
        remap = {m: i for i, m in enumerate(keep)}
        native = {}
        for o in range(self.node_type_count):
            mods = {remap[m] for m in self.native_modalities_of_type[o] if m in remap}
            native[o] = frozenset(mods) if mods else frozenset(range(len(keep)))
        return ModalitySchema(tuple(self.modality_names[m] for m in keep), native,
                              tuple(self.input_dim_of_modality[m] for m in keep),
                              self.target_node_type, self.categories, self.node_type_count)


@dataclass(frozen=True, eq=False)
class FeatureStore:
    features: tuple[np.ndarray, ...]
    presence: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(_frozen(x, np.float64) for x in self.features))
        object.__setattr__(self, "presence", _frozen(self.presence, bool))

    def is_complete(self) -> bool:
        return all(np.isfinite(x).all() for x in self.features)

    def restricted(self, keep: Sequence[int]) -> "FeatureStore":
        return FeatureStore(tuple(self.features[m] for m in keep), self.presence[:, list(keep)])


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    labels: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("train_ids", "val_ids", "test_ids"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name)).reshape(-1), np.int64))
        object.__setattr__(self, "labels", {int(k): int(v) for k, v in self.labels.items()})
        parts = [set(self.train_ids.tolist()), set(self.val_ids.tolist()), set(self.test_ids.tolist())]
        if sum(len(p) for p in parts) != len(parts[0] | parts[1] | parts[2]):
            raise DatasetError("overlapping splits")
        for p in parts:
            missing = p - self.labels.keys()
            if missing:
                raise DatasetError(f"split lists unlabeled node {min(missing)}")

    def ids(self, part: str) -> np.ndarray:
        try:
            return {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}[part]
        except KeyError:
            raise ValueError(f"unknown split part {part!r}") from None

    def label_array(self, ids) -> np.ndarray:
        return np.array([self.labels[int(i)] for i in ids], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: MmhnGraph
    schema: ModalitySchema
    store: FeatureStore
    split: DatasetSplit

    def __iter__(self):
        return iter((self.graph, self.schema, self.store, self.split))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.graph.node_type_of.tobytes())
        h.update(self.graph.canonical_edges.tobytes())
        h.update(json.dumps([self.graph.node_type_names, self.graph.edge_type_names,
                             self.schema.modality_names, self.schema.input_dim_of_modality,
                             sorted((k, sorted(v)) for k, v in self.schema.native_modalities_of_type.items()),
                             self.schema.target_node_type, self.schema.categories]).encode())
        for x in self.store.features:
            h.update(np.nan_to_num(x, nan=0.0).tobytes())
        for part in ("train", "val", "test"):
            h.update(self.split.ids(part).tobytes())
        h.update(json.dumps(sorted(self.split.labels.items())).encode())
        return h.hexdigest()[:16]

    def schema_hash(self) -> str:
        doc = [self.graph.node_type_names, self.graph.edge_type_names, self.schema.modality_names,
               self.schema.input_dim_of_modality, self.schema.target_node_type, self.schema.categories,
               sorted((k, sorted(v)) for k, v in self.schema.native_modalities_of_type.items())]
        return hashlib.sha256(json.dumps(doc).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- completion

def complete_missing_features(store: FeatureStore, schema: ModalitySchema, reference_modality: int | str = 0,
                              zero_fill_unreferenced: bool = False) -> FeatureStore:
    """Fill every non-native (node, modality) slot from the reference modality.

    Copies are zero-padded or truncated to the slot's dim.  If some node type
    lacks the reference modality a :class:`ConfigError` is raised, unless
    ``zero_fill_unreferenced`` asks for zero vectors there instead.
    """
    ref = schema.modality_id(reference_modality) if isinstance(reference_modality, str) else int(reference_modality)
    if not 0 <= ref < schema.modality_count:
        raise ConfigError(f"reference modality {reference_modality!r} out of range")
    presence = store.presence
    lacking = [o for o in range(schema.node_type_count) if ref not in schema.native_modalities_of_type[o]]
    if lacking and not zero_fill_unreferenced:
        raise ConfigError(f"reference modality {schema.modality_names[ref]!r} is missing for node types {lacking}")
    ref_x = store.features[ref]
    ref_ok = presence[:, ref]
    out = []
    for m, x in enumerate(store.features):
        x = np.array(x, copy=True)
        rows = np.flatnonzero(~presence[:, m])
        if rows.size:
            dim = x.shape[1]
            fill = np.zeros((rows.size, dim))
            src = ref_x[rows][:, :dim]
            usable = ref_ok[rows]
            fill[usable, : src.shape[1]] = src[usable]
            x[rows] = fill
        out.append(x)
    return FeatureStore(tuple(out), presence)


# --------------------------------------------------------------------------- splitting

def _controlled_rounding(counts: list[int], ratios: tuple[float, ...], totals: list[int]) -> np.ndarray:
    """Integer table a[c, p] with a[c, p] in {floor, ceil}(r_p * counts[c]),
    row sums ``counts`` and column sums ``totals``.

    Floors are taken first; the leftover units are routed category -> part by
    a max flow, one unit per (category, part) cell.
    """
    exact = np.outer(counts, ratios)
    base = np.floor(exact + 1e-12).astype(np.int64)
    row_left = np.asarray(counts) - base.sum(axis=1)
    col_left = np.asarray(totals) - base.sum(axis=0)
    if (col_left < 0).any():
        raise ValueError("split totals are inconsistent with the ratios")
    C, P = base.shape
    # nodes: 0 source, 1..C categories, C+1..C+P parts, C+P+1 sink
    n = C + P + 2
    cap = np.zeros((n, n), dtype=np.int32)
    cap[0, 1:C + 1] = row_left
    for c in range(C):
        for q in range(P):
            if exact[c, q] - base[c, q] > 1e-12:
                cap[1 + c, C + 1 + q] = 1
    cap[C + 1:C + P + 1, n - 1] = col_left
    flow = maximum_flow(csr_matrix(cap), 0, n - 1)
    if flow.flow_value != row_left.sum():
        raise RuntimeError("no stratified split satisfies the ratios")
    extra = flow.flow.toarray()[1:C + 1, C + 1:C + P + 1]
    return base + np.maximum(extra, 0)


def split_dataset(labels: Mapping[int, int], ratios=(0.2, 0.1, 0.7), seed: int = 0) -> DatasetSplit:
    """Stratified train/val/test split.

    Global part sizes are ``floor(r * n + 0.5)`` for train and val (test takes
    the rest).  Each category contributes within one node of its exact share
    to every part; nodes are shuffled per category with ``seed``.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    by_cat: dict[int, list[int]] = {}
    for node, c in sorted(labels.items()):
        by_cat.setdefault(int(c), []).append(int(node))
    small = sorted(c for c, nodes in by_cat.items() if len(nodes) < 3)
    if small:
        raise ValueError(f"categories with fewer labeled nodes than split parts: {small}")
    cats = sorted(by_cat)
    n = len(labels)
    n_train = int(math.floor(ratios[0] * n + 0.5))
    n_val = int(math.floor(ratios[1] * n + 0.5))
    table = _controlled_rounding([len(by_cat[c]) for c in cats], ratios, [n_train, n_val, n - n_train - n_val])
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[], [], []]
    for c, row in zip(cats, table):
        nodes = np.array(by_cat[c])[rng.permutation(len(by_cat[c]))]
        cuts = np.cumsum(row)[:-1]
        for q, chunk in enumerate(np.split(nodes, cuts)):
            parts[q] += chunk.tolist()
    return DatasetSplit(sorted(parts[0]), sorted(parts[1]), sorted(parts[2]), labels)


# --------------------------------------------------------------------------- disk format

DEFAULT_FILES = {"nodes": "nodes.tsv", "edges": "edges.tsv", "labels": "labels.tsv", "split": "split.tsv"}


def _tsv_rows(path: Path, ncols: int):
    if not path.exists():
        raise DatasetError(f"{path}: missing file")
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != ncols:
                raise DatasetError(f"{path.name}:{lineno}: expected {ncols} tab-separated fields")
            yield lineno, parts


def _int(path: Path, lineno: int, s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise DatasetError(f"{path.name}:{lineno}: not an integer id {s!r}") from None


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DatasetError(f"{manifest_path}: missing file")
    try:
        man = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    root = manifest_path.parent
    for key in ("node_types", "edge_types", "modalities", "target_type", "categories"):
        if key not in man:
            raise DatasetError(f"{manifest_path.name}: missing field {key!r}")
    files = {**DEFAULT_FILES, **man.get("files", {})}

    mod_names = [m["name"] for m in man["modalities"]]
    dims = [int(m["dim"]) for m in man["modalities"]]
    type_names, native = [], {}
    for o, entry in enumerate(man["node_types"]):
        if isinstance(entry, str):
            type_names.append(entry)
            native[o] = frozenset(range(len(mod_names)))
        else:
            type_names.append(entry["name"])
            try:
                native[o] = frozenset(mod_names.index(m) for m in entry.get("modalities", mod_names))
            except ValueError:
                raise DatasetError(f"{manifest_path.name}: node type {entry['name']!r} lists an unknown modality") from None
    edge_names = list(man["edge_types"])
    categories = list(man["categories"])
    if man["target_type"] not in type_names:
        raise DatasetError(f"{manifest_path.name}: target type {man['target_type']!r} is not a node type")
    try:
        schema = ModalitySchema(tuple(mod_names), native, tuple(dims), type_names.index(man["target_type"]),
                                tuple(categories), len(type_names))
    except ConfigError as exc:
        raise DatasetError(f"{manifest_path.name}: {exc}") from None

    # nodes
    npath = root / files["nodes"]
    node_rows = {}
    for lineno, (nid, tname) in _tsv_rows(npath, 2):
        i = _int(npath, lineno, nid)
        if tname not in type_names:
            raise DatasetError(f"{npath.name}:{lineno}: unknown type id {tname!r}")
        if i in node_rows:
            raise DatasetError(f"{npath.name}:{lineno}: duplicate node id {i}")
        node_rows[i] = type_names.index(tname)
    n = len(node_rows)
    if sorted(node_rows) != list(range(n)):
        raise DatasetError(f"{npath.name}: node ids must be contiguous from 0")
    node_type_of = np.array([node_rows[i] for i in range(n)], dtype=np.int64)

    # edges
    epath = root / files["edges"]
    edges = []
    for lineno, (s, d, tname) in _tsv_rows(epath, 3):
        si, di = _int(epath, lineno, s), _int(epath, lineno, d)
        if not (0 <= si < n and 0 <= di < n):
            raise DatasetError(f"{epath.name}:{lineno}: invalid endpoint ({si} -> {di}, graph has {n} nodes)")
        if tname not in edge_names:
            raise DatasetError(f"{epath.name}:{lineno}: unknown type id {tname!r}")
        edges.append((si, di, edge_names.index(tname)))
    try:
        graph = MmhnGraph(node_type_of, np.array(edges, dtype=np.int64).reshape(-1, 3),
                          tuple(type_names), tuple(edge_names))
    except DatasetError as exc:
        raise DatasetError(f"{manifest_path.name}: {exc}") from None

    # features
    presence = schema.presence_for(graph)
    feats = []
    feat_files = files.get("features", {})
    for m, name in enumerate(mod_names):
        fpath = root / feat_files.get(name, f"{name}.csv")
        if not fpath.exists():
            raise DatasetError(f"{fpath}: missing file")
        x = np.full((n, dims[m]), np.nan)
        with fpath.open() as fh:
            lines = fh.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) != n:
            raise DatasetError(f"{fpath.name}: expected {n} rows, found {len(lines)}")
        for i, line in enumerate(lines):
            if not line.strip():
                if presence[i, m]:
                    raise DatasetError(f"{fpath.name}:{i + 1}: empty row for a node that natively has {name!r}")
                continue
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise DatasetError(f"{fpath.name}:{i + 1}: non-numeric feature value") from None
            if len(vals) != dims[m]:
                raise DatasetError(f"{fpath.name}:{i + 1}: dimension mismatch ({len(vals)} values, dim={dims[m]})")
            x[i] = vals
        feats.append(x)
    store = FeatureStore(tuple(feats), presence)

    # labels
    lpath = root / files["labels"]
    labels = {}
    for lineno, (nid, cname) in _tsv_rows(lpath, 2):
        i = _int(lpath, lineno, nid)
        if not 0 <= i < n:
            raise DatasetError(f"{lpath.name}:{lineno}: unknown node id {i}")
        if node_type_of[i] != schema.target_node_type:
            raise DatasetError(f"{lpath.name}:{lineno}: node {i} is not of the target type")
        if cname not in categories:
            raise DatasetError(f"{lpath.name}:{lineno}: label {cname!r} outside categories")
        labels[i] = categories.index(cname)

    # split
    spath = root / files["split"]
    if "split" in man.get("files", {}) or spath.exists():
        parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
        seen = {}
        for lineno, (nid, part) in _tsv_rows(spath, 2):
            i = _int(spath, lineno, nid)
            if part not in parts:
                raise DatasetError(f"{spath.name}:{lineno}: unknown split part {part!r}")
            if i in seen:
                raise DatasetError(f"{spath.name}:{lineno}: overlapping splits (node {i} already in {seen[i]})")
            if i not in labels:
                raise DatasetError(f"{spath.name}:{lineno}: node {i} has no label")
            seen[i] = part
            parts[part].append(i)
        split = DatasetSplit(parts["train"], parts["val"], parts["test"], labels)
    else:
        split = split_dataset(labels, tuple(man.get("split_ratios", (0.2, 0.1, 0.7))), int(man.get("split_seed", 0)))
    return Dataset(graph, schema, store, split)


def save_dataset(dataset: Dataset, out_dir, name: str = "manifest.json") -> Path:
    """Write ``dataset`` in the manifest format; returns the manifest path.

    Output is a pure function of the dataset, so equal datasets give
    byte-identical files.
    """
    graph, schema, store, split = dataset
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    node_types = []
    for o, tname in enumerate(graph.node_type_names):
        mods = [schema.modality_names[m] for m in sorted(schema.native_modalities_of_type[o])]
        node_types.append({"name": tname, "modalities": mods})
    feat_files = {m: f"features_{m}.csv" for m in schema.modality_names}
    manifest = {
        "node_types": node_types,
        "edge_types": list(graph.edge_type_names),
        "modalities": [{"name": m, "dim": d} for m, d in zip(schema.modality_names, schema.input_dim_of_modality)],
        "target_type": graph.node_type_names[schema.target_node_type],
        "categories": list(schema.categories),
        "files": {**DEFAULT_FILES, "features": feat_files},
    }
    (out / DEFAULT_FILES["nodes"]).write_text(
        "".join(f"{i}\t{graph.node_type_names[t]}\n" for i, t in enumerate(graph.node_type_of.tolist())))
    (out / DEFAULT_FILES["edges"]).write_text(
        "".join(f"{s}\t{d}\t{graph.edge_type_names[t]}\n" for s, d, t in graph.edges.tolist()))
    for m, mname in enumerate(schema.modality_names):
        rows = []
        for row in store.features[m]:
            rows.append("" if np.isnan(row).all() else ",".join(repr(float(v)) for v in row))
        (out / feat_files[mname]).write_text("\n".join(rows) + "\n")
    (out / DEFAULT_FILES["labels"]).write_text(
        "".join(f"{i}\t{schema.categories[c]}\n" for i, c in sorted(split.labels.items())))
    lines = [f"{i}\t{part}\n" for part in ("train", "val", "test") for i in split.ids(part).tolist()]
    (out / DEFAULT_FILES["split"]).write_text("".join(lines))
    path = out / name
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
