"""Scene representations: semantic embedding tables and one-hot codebooks.

Embedding tables are portable TSV files produced offline by the exporter
tool (the language models stay frozen and out of process):

    dim<TAB>E
    <label><TAB>f1<TAB>...<TAB>fE

Labels are compared after trimming and lowercasing. A table may contain
labels that never occurred in training; that is what lets an aligned model
accept unseen scene contexts, while one-hot codebooks by construction
cannot.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SceneSedError


class TableError(SceneSedError):
    pass


class TableFieldCountError(TableError):
    pass


class TableDuplicateLabelError(TableError):
    pass


class TableValueError(TableError):
    pass


class UnknownSceneLabelError(SceneSedError):
    """Label absent from an embedding table."""


class UnseenSceneError(SceneSedError):
    """One-hot mode asked to encode a scene outside its codebook."""


def normalize_label(label):
    return label.strip().lower()


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict = field(default_factory=dict)  # normalized label -> (dim,) float64
    source: str = ""

    def labels(self):
        return list(self.entries)


def load_table(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0]:
        raise TableError(f"{path}: empty table")
    header = lines[0].split("\t")
    if len(header) != 2 or header[0] != "dim":
        raise TableError(f"{path}:1: header must be 'dim<TAB><E>'")
    try:
        dim = int(header[1])
    except ValueError:
        raise TableValueError(f"{path}:1: non-integer dimension {header[1]!r}") from None
    if dim < 1:
        raise TableError(f"{path}:1: dimension must be positive")
    table = EmbeddingTable(dim=dim)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != dim + 1:
            raise TableFieldCountError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}")
        label = normalize_label(parts[0])
        if label in table.entries:
            raise TableDuplicateLabelError(f"{path}:{lineno}: duplicate label {label!r}")
        try:
            vec = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise TableValueError(f"{path}:{lineno}: non-numeric field") from None
        table.entries[label] = vec
    return table


def write_table(table, path):
    """17 significant digits per float, so load(write(t)) == t exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim\t{table.dim}\n")
        for label, vec in table.entries.items():
            fh.write(label + "\t" + "\t".join(f"{v:.17g}" for v in vec) + "\n")


def _edit_distance(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def lookup(table, label):
    """Vector for a (normalized) label; works for any label in the table,
    trained-on or not."""
    key = normalize_label(label)
    if key not in table.entries:
        near = sorted(table.entries, key=lambda other: _edit_distance(key, other))[:3]
        raise UnknownSceneLabelError(
            f"scene label {label!r} not in the embedding table; nearest known labels: {', '.join(near) or '(none)'}")
    return table.entries[key]


@dataclass
class OneHotCodebook:
    labels: tuple

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if len(set(self.labels)) != len(self.labels):
            raise TableError("one-hot codebook labels must be unique")

    @property
    def dim(self):
        return len(self.labels)


def onehot(codebook, label):
    if label not in codebook.labels:
        raise UnseenSceneError(
            f"scene {label!r} was not among the training scenes {list(codebook.labels)}; "
            "one-hot mode cannot encode unseen scenes")
    vec = np.zeros(len(codebook.labels))
    vec[codebook.labels.index(label)] = 1.0
    return vec


def _label_key(label):
    # stable across runs and processes, unlike hash()
    acc = 2166136261
    for byte in label.encode("utf-8"):
        acc = ((acc ^ byte) * 16777619) & 0xFFFFFFFF
    return acc


def pseudo_table(labels, dim, seed=0, source="pseudo"):
    """Deterministic Gaussian embedding per label; the test-fixture stand-in
    for real language-model output."""
    table = EmbeddingTable(dim=dim, source=source)
    for label in labels:
        key = normalize_label(label)
        rng = np.random.default_rng((int(seed), _label_key(key)))
        table.entries[key] = rng.normal(0.0, 1.0, size=dim)
    return table
