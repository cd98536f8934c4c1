"""CMU fixed-text keystroke dataset: ingestion, views, splits, augmentation.

The source table has one row per password repetition: three metadata columns
(subject, sessionIndex, rep) followed by 31 timing features in seconds. The
password ".tie5Roanl" plus Enter gives 11 keystrokes, hence 11 hold times (H),
10 down-down intervals (DD) and 10 up-down intervals (UD). UD may be negative
when keystrokes overlap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    EmptyDatasetError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)

# The 11 keystrokes of ".tie5Roanl" + Enter, using the CMU key names.
KEYS = ("period", "t", "i", "e", "five", "Shift.r", "o", "a", "n", "l", "Return")

METADATA_COLUMNS = ("subject", "sessionIndex", "rep")


def _canonical_columns() -> tuple[str, ...]:
    cols = ["H.%s" % KEYS[0]]
    for a, b in zip(KEYS, KEYS[1:]):
        cols += ["DD.%s.%s" % (a, b), "UD.%s.%s" % (a, b), "H.%s" % b]
    return tuple(cols)


FEATURE_COLUMNS = _canonical_columns()
N_FEATURES = len(FEATURE_COLUMNS)  # 31

# Column indices per timing family. H/DD/UD partition the 31 columns.
H_INDICES = tuple(range(0, N_FEATURES, 3))
DD_INDICES = tuple(range(1, N_FEATURES, 3))
UD_INDICES = tuple(range(2, N_FEATURES, 3))

PAD_VALUE = 0.0  # fills the final keystroke's missing DD/UD cells in FixedKds


@dataclass(frozen=True)
class FeatureGroup:
    """A named selection of timing columns (H, DD, UD or All)."""

    name: str
    indices: tuple[int, ...]


_GROUPS = {
    "H": FeatureGroup("H", H_INDICES),
    "DD": FeatureGroup("DD", DD_INDICES),
    "UD": FeatureGroup("UD", UD_INDICES),
    "ALL": FeatureGroup("All", tuple(range(N_FEATURES))),
}


def feature_group(name: str) -> FeatureGroup:
    """Look up a feature group by name (case-insensitive: H, DD, UD, All)."""
    try:
        return _GROUPS[name.upper()]
    except KeyError:
        raise ConfigError("unknown feature group %r (expected H, DD, UD or All)" % name) from None


@dataclass(frozen=True)
class KeystrokeRecord:
    """One password repetition: subject label, session, rep and 31 timings."""

    subject: str
    session: int
    rep: int
    features: np.ndarray

    def __post_init__(self):
        if not self.subject:
            raise ValueError("subject label must be non-empty")
        if self.features.shape != (N_FEATURES,):
            raise ValueError("expected %d features, got shape %s" % (N_FEATURES, self.features.shape))


class Dataset:
    """Immutable table of keystroke records with a fixed subject roster.

    Arrays are frozen after construction so datasets and views can be shared
    across threads without copying.
    """

    def __init__(
        self,
        subjects: np.ndarray,
        sessions: np.ndarray,
        reps: np.ndarray,
        features: np.ndarray,
        columns: tuple[str, ...],
        roster: tuple[str, ...] | None = None,
    ):
        n = len(subjects)
        if not (len(sessions) == len(reps) == features.shape[0] == n):
            raise ValueError("metadata/feature row counts disagree")
        if features.shape[1] != len(columns):
            raise ValueError("feature width %d != column count %d" % (features.shape[1], len(columns)))
        self.subjects = np.asarray(subjects, dtype=object)
        self.sessions = np.asarray(sessions, dtype=np.int64)
        self.reps = np.asarray(reps, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        self.columns = tuple(columns)
        if roster is None:
            roster = tuple(dict.fromkeys(self.subjects))  # first-appearance order
        self.roster = tuple(roster)
        self._roster_index = {s: i for i, s in enumerate(self.roster)}
        for arr in (self.subjects, self.sessions, self.reps, self.features):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def record(self, i: int) -> KeystrokeRecord:
        if self.n_features != N_FEATURES:
            raise ValueError("records are only defined on the full 31-column table")
        return KeystrokeRecord(
            subject=self.subjects[i],
            session=int(self.sessions[i]),
            rep=int(self.reps[i]),
            features=self.features[i].copy(),
        )

    def label_indices(self) -> np.ndarray:
        """Roster position of each record's subject, as an int array."""
        return np.fromiter((self._roster_index[s] for s in self.subjects), dtype=np.int64, count=len(self))

    def indices_of(self, subject: str) -> np.ndarray:
        if subject not in self._roster_index:
            raise KeyError("unknown subject %r" % subject)
        return np.flatnonzero(self.subjects == subject)

    def take(self, indices: np.ndarray) -> "Dataset":
        """Row subset preserving the roster (so label indices stay stable)."""
        return Dataset(
            self.subjects[indices],
            self.sessions[indices],
            self.reps[indices],
            self.features[indices],
            self.columns,
            roster=self.roster,
        )


def ingest_csv(path: str | Path) -> Dataset:
    """Load the CMU-format CSV at ``path``.

    The header must name the three metadata columns followed by the 31 timing
    columns in canonical CMU order; reordered or renamed headers are rejected
    rather than guessed at. Lines starting with ``#`` are ignored.
    """
    path = Path(path)
    expected = METADATA_COLUMNS + FEATURE_COLUMNS
    subjects: list[str] = []
    sessions: list[int] = []
    reps: list[int] = []
    rows: list[np.ndarray] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, cells in enumerate(reader, start=1):
            if not cells or (cells[0].startswith("#")):
                continue
            if header is None:
                header = tuple(c.strip() for c in cells)
                if header != expected:
                    missing = set(expected) - set(header)
                    extra = set(header) - set(expected)
                    detail = []
                    if missing:
                        detail.append("missing %s" % sorted(missing))
                    if extra:
                        detail.append("unknown %s" % sorted(extra))
                    if not detail:
                        detail.append("columns out of canonical order")
                    raise SchemaError("%s: bad header: %s" % (path, "; ".join(detail)))
                continue
            if len(cells) != len(expected):
                raise ParseError("%s: row %d: expected %d cells, got %d" % (path, lineno, len(expected), len(cells)))
            subject = cells[0].strip()
            if not subject:
                raise ParseError("%s: row %d: empty subject label" % (path, lineno))
            try:
                session = int(cells[1])
                rep = int(cells[2])
            except ValueError:
                raise ParseError("%s: row %d: non-integer session/rep" % (path, lineno)) from None
            try:
                feats = np.array([float(c) for c in cells[3:]], dtype=np.float64)
            except ValueError:
                raise ParseError("%s: row %d: non-numeric timing cell" % (path, lineno)) from None
            subjects.append(subject)
            sessions.append(session)
            reps.append(rep)
            rows.append(feats)
    if header is None:
        raise SchemaError("%s: no header row" % path)
    if not rows:
        raise EmptyDatasetError("%s: header but no data rows" % path)
    return Dataset(
        np.array(subjects, dtype=object),
        np.array(sessions),
        np.array(reps),
        np.vstack(rows),
        FEATURE_COLUMNS,
    )


def write_csv(ds: Dataset, path: str | Path, command: str | None = None) -> None:
    """Serialize ``ds`` in the ingestion format (round-trips exactly).

    ``command`` is embedded as a leading ``#`` comment for provenance; the
    reader skips it.
    """
    with open(path, "w", newline="") as fh:
        if command:
            fh.write("# command: %s\n" % command)
        writer = csv.writer(fh)
        writer.writerow(list(METADATA_COLUMNS) + list(ds.columns))
        for i in range(len(ds)):
            writer.writerow(
                [ds.subjects[i], int(ds.sessions[i]), int(ds.reps[i])]
                + [repr(float(v)) for v in ds.features[i]]
            )


def select_features(ds: Dataset, group: FeatureGroup | str) -> Dataset:
    """View of ``ds`` exposing only the group's columns; record count unchanged."""
    if isinstance(group, str):
        group = feature_group(group)
    cols = tuple(ds.columns[i] for i in group.indices)
    return Dataset(ds.subjects, ds.sessions, ds.reps, ds.features[:, group.indices], cols, roster=ds.roster)


@dataclass(frozen=True)
class SplitSpec:
    """Train/test partition parameters. Stratified keeps per-subject ratios."""

    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition ``ds`` into disjoint train/test datasets, deterministic per seed.

    Stratified mode draws each subject's train share independently so every
    subject's train count is within one record of train_fraction times its
    record count.
    """
    f = spec.train_fraction
    if not 0.0 < f <= 1.0:
        raise ConfigError("train_fraction must be in (0, 1], got %r" % f)
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        train_idx: list[np.ndarray] = []
        test_idx: list[np.ndarray] = []
        for subject in ds.roster:
            idx = ds.indices_of(subject)
            if len(idx) < 2:
                raise InsufficientDataError(
                    "subject %r has %d record(s); stratified split needs >= 2" % (subject, len(idx))
                )
            perm = rng.permutation(idx)
            n_train = int(np.floor(f * len(idx) + 0.5))
            train_idx.append(perm[:n_train])
            test_idx.append(perm[n_train:])
        train = np.sort(np.concatenate(train_idx))
        test = np.sort(np.concatenate(test_idx))
    else:
        perm = rng.permutation(len(ds))
        n_train = int(np.floor(f * len(ds) + 0.5))
        train = np.sort(perm[:n_train])
        test = np.sort(perm[n_train:])
    return ds.take(train), ds.take(test)


@dataclass(frozen=True)
class FixedKds:
    """11x3 per-repetition matrix: row i = (H_i, DD_i,i+1, UD_i,i+1).

    Row 11 carries only the final keystroke's hold time; Enter has no
    successor, so its DD/UD cells hold the pad value 0.0.
    """

    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (11, 3):
            raise ValueError("fixed-KDS matrix must be 11x3, got %s" % (self.matrix.shape,))


def to_fixed_kds(rec: KeystrokeRecord) -> FixedKds:
    """Encode a record's 31 features as the 11x3 fixed-KDS matrix."""
    padded = np.concatenate([rec.features, [PAD_VALUE, PAD_VALUE]])
    # Canonical order is H, DD, UD repeating, so the encoding is a reshape.
    return FixedKds(padded.reshape(11, 3))


def fixed_kds_features(kds: FixedKds) -> np.ndarray:
    """Invert :func:`to_fixed_kds`: recover the 31 features from the matrix."""
    return kds.matrix.reshape(-1)[:N_FEATURES].copy()


@dataclass(frozen=True)
class AugmentConfig:
    """Uniform timing-perturbation augmentation parameters.

    ``ratio`` synthetic copies are generated per original row; each synthetic
    feature is the original plus noise drawn uniformly from the open interval
    (-range_s, range_s) seconds. No clamping: UD is legitimately negative.
    """

    ratio: int = 2
    range_s: float = 0.02
    seed: int = 0


def augment(train: Dataset, cfg: AugmentConfig) -> Dataset:
    """Append ``cfg.ratio`` perturbed copies of every training row.

    Applies to the training partition only; callers must not pass test data
    (synthetic rows derived from test rows would leak the evaluation set).
    """
    if cfg.ratio < 0:
        raise ConfigError("augment ratio must be >= 0, got %d" % cfg.ratio)
    if cfg.range_s <= 0:
        raise ConfigError("augment range must be > 0, got %r" % cfg.range_s)
    if cfg.ratio == 0:
        return train
    rng = np.random.default_rng(cfg.seed)
    lo = np.nextafter(-cfg.range_s, 0.0)
    hi = np.nextafter(cfg.range_s, 0.0)
    blocks = [train.features]
    for _ in range(cfg.ratio):
        delta = rng.uniform(-cfg.range_s, cfg.range_s, size=train.features.shape)
        # uniform() can return the lower bound; clip one ulp inside to keep the
        # interval open as documented.
        blocks.append(train.features + np.clip(delta, lo, hi))
    reps = cfg.ratio + 1
    return Dataset(
        np.tile(train.subjects, reps),
        np.tile(train.sessions, reps),
        np.tile(train.reps, reps),
        np.vstack(blocks),
        train.columns,
        roster=train.roster,
    )


def one_hot_labels(ds: Dataset) -> np.ndarray:
    """(n, roster size) matrix with a single 1 per row at the subject's index."""
    idx = ds.label_indices()
    out = np.zeros((len(ds), len(ds.roster)), dtype=np.float64)
    out[np.arange(len(ds)), idx] = 1.0
    return out


def explore_stats(
    ds: Dataset, group: FeatureGroup | str, subjects: list[str]
) -> list[tuple[str, str, float, float]]:
    """Per-subject, per-column mean and std over the group's columns.

    Returns plot-ready rows ``(subject, column_name, mean, std)`` in subject
    then column order. Unknown subjects raise KeyError.
    """
    view = select_features(ds, group)
    rows = []
    for subject in subjects:
        idx = view.indices_of(subject)
        block = view.features[idx]
        means = block.mean(axis=0)
        stds = block.std(axis=0)
        for col, m, s in zip(view.columns, means, stds):
            rows.append((subject, col, float(m), float(s)))
    return rows


def synth_fixture(n_subjects: int, reps: int, seed: int = 0) -> Dataset:
    """Generate a CMU-shaped dataset with separable per-subject profiles.

    Each subject gets a Gaussian timing profile: hold times and up-down
    intervals drawn per key, down-down derived as DD = H + UD so the three
    families stay physically consistent. Deterministic per seed.
    """
    if n_subjects < 1 or reps < 1:
        raise ConfigError("synth_fixture counts must be >= 1")
    rng = np.random.default_rng(seed)
    subjects = []
    sessions = []
    rep_ids = []
    feats = np.empty((n_subjects * reps, N_FEATURES))
    for s in range(n_subjects):
        hold = rng.uniform(0.05, 0.18, size=11)
        updown = rng.uniform(-0.02, 0.30, size=10)
        mean = np.empty(N_FEATURES)
        mean[list(H_INDICES)] = hold
        mean[list(UD_INDICES)] = updown
        mean[list(DD_INDICES)] = hold[:10] + updown
        noise = rng.normal(0.0, 0.012, size=(reps, N_FEATURES))
        feats[s * reps : (s + 1) * reps] = mean + noise
        label = "s%03d" % (s + 1)
        for j in range(reps):
            subjects.append(label)
            sessions.append((j // 50) % 8 + 1)
            rep_ids.append(j % 50 + 1)
    return Dataset(
        np.array(subjects, dtype=object),
        np.array(sessions),
        np.array(rep_ids),
        feats,
        FEATURE_COLUMNS,
    )
