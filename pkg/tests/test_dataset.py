import numpy as np
import pytest

from keyforge import dataset as kd
from keyforge.errors import (
    ConfigError,
    EmptyDatasetError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)

from conftest import make_csv


def _row(subject, session, rep, feats):
    return [subject, session, rep] + [repr(v) for v in feats]


def _index_map_from_names():
    """Independent oracle: derive group indices by parsing column names."""
    h, dd, ud = [], [], []
    for i, name in enumerate(kd.FEATURE_COLUMNS):
        if name.startswith("H."):
            h.append(i)
        elif name.startswith("DD."):
            dd.append(i)
        elif name.startswith("UD."):
            ud.append(i)
    return h, dd, ud


class TestSchema:
    def test_column_layout(self):
        assert len(kd.FEATURE_COLUMNS) == 31
        assert kd.FEATURE_COLUMNS[0] == "H.period"
        assert kd.FEATURE_COLUMNS[1] == "DD.period.t"
        assert kd.FEATURE_COLUMNS[2] == "UD.period.t"
        assert kd.FEATURE_COLUMNS[-1] == "H.Return"
        assert "DD.five.Shift.r" in kd.FEATURE_COLUMNS
        assert "UD.Shift.r.o" in kd.FEATURE_COLUMNS

    def test_groups_partition_columns(self):
        h, dd, ud = _index_map_from_names()
        assert tuple(h) == kd.H_INDICES and len(h) == 11
        assert tuple(dd) == kd.DD_INDICES and len(dd) == 10
        assert tuple(ud) == kd.UD_INDICES and len(ud) == 10
        assert sorted(h + dd + ud) == list(range(31))

    def test_unknown_group_rejected(self):
        with pytest.raises(ConfigError):
            kd.feature_group("HH")


class TestIngest:
    def test_two_row_fixture_verbatim(self, tmp_path):
        f1 = [round(0.01 * i + 0.005, 6) for i in range(31)]
        f2 = [round(0.02 * i + 0.001, 6) for i in range(31)]
        path = make_csv(tmp_path / "two.csv", [_row("s002", 1, 1, f1), _row("s003", 2, 7, f2)])
        ds = kd.ingest_csv(path)
        assert len(ds) == 2
        assert ds.roster == ("s002", "s003")
        assert np.array_equal(ds.features[0], np.array(f1))
        assert np.array_equal(ds.features[1], np.array(f2))
        assert ds.sessions.tolist() == [1, 2]
        assert ds.reps.tolist() == [1, 7]

    def test_header_only_is_empty_dataset_error(self, tmp_path):
        path = make_csv(tmp_path / "empty.csv", [])
        with pytest.raises(EmptyDatasetError):
            kd.ingest_csv(path)

    def test_reordered_header_rejected(self, tmp_path):
        header = list(kd.METADATA_COLUMNS) + list(kd.FEATURE_COLUMNS[::-1])
        path = make_csv(tmp_path / "re.csv", [_row("s002", 1, 1, [0.0] * 31)], header=header)
        with pytest.raises(SchemaError):
            kd.ingest_csv(path)

    def test_missing_column_rejected(self, tmp_path):
        header = (list(kd.METADATA_COLUMNS) + list(kd.FEATURE_COLUMNS))[:-1]
        path = make_csv(tmp_path / "mis.csv", [], header=header)
        with pytest.raises(SchemaError, match="H.Return"):
            kd.ingest_csv(path)

    def test_non_numeric_cell_reports_row(self, tmp_path):
        bad = ["0.1"] * 31
        bad[5] = "oops"
        path = make_csv(
            tmp_path / "bad.csv",
            [_row("s002", 1, 1, [0.1] * 31), ["s002", 1, 2] + bad],
        )
        with pytest.raises(ParseError, match="row 3"):
            kd.ingest_csv(path)

    def test_roundtrip_identity(self, tmp_path):
        ds = kd.synth_fixture(4, 9, seed=11)
        out = tmp_path / "rt.csv"
        kd.write_csv(ds, out, command="keyforge test")
        back = kd.ingest_csv(out)
        assert np.array_equal(back.features, ds.features)
        assert back.subjects.tolist() == ds.subjects.tolist()
        assert back.sessions.tolist() == ds.sessions.tolist()
        assert back.reps.tolist() == ds.reps.tolist()


class TestSelectFeatures:
    def test_all_is_identity(self):
        ds = kd.synth_fixture(2, 3, seed=0)
        view = kd.select_features(ds, "All")
        assert view.n_features == 31
        assert np.array_equal(view.features, ds.features)

    def test_group_widths(self):
        ds = kd.synth_fixture(2, 3, seed=0)
        assert kd.select_features(ds, "H").n_features == 11
        assert kd.select_features(ds, "DD").n_features == 10
        assert kd.select_features(ds, "UD").n_features == 10

    def test_h_view_matches_index_map_oracle(self):
        ds = kd.synth_fixture(1, 2, seed=3)
        h, _, _ = _index_map_from_names()
        view = kd.select_features(ds, "H")
        assert np.array_equal(view.features, ds.features[:, h])
        assert view.columns == tuple(kd.FEATURE_COLUMNS[i] for i in h)
        assert len(view) == len(ds)


class TestSplit:
    def test_stratified_counts_320_80(self):
        ds = kd.synth_fixture(5, 400, seed=1)
        train, test = kd.split(ds, kd.SplitSpec(0.8, seed=7))
        assert len(train) == 5 * 320 and len(test) == 5 * 80
        for s in ds.roster:
            assert len(train.indices_of(s)) == 320
            assert len(test.indices_of(s)) == 80

    def test_fraction_one_gives_empty_test(self):
        ds = kd.synth_fixture(3, 10, seed=2)
        train, test = kd.split(ds, kd.SplitSpec(1.0, seed=0))
        assert len(train) == len(ds)
        assert len(test) == 0

    def test_union_and_disjoint(self):
        ds = kd.synth_fixture(4, 25, seed=5)
        train, test = kd.split(ds, kd.SplitSpec(0.7, seed=9))
        key = lambda d: {(d.subjects[i], int(d.sessions[i]), int(d.reps[i])) for i in range(len(d))}
        assert key(train) | key(test) == key(ds)
        assert not (key(train) & key(test))

    def test_seed_reproducible(self):
        ds = kd.synth_fixture(4, 30, seed=5)
        a1, b1 = kd.split(ds, kd.SplitSpec(0.8, seed=42))
        a2, b2 = kd.split(ds, kd.SplitSpec(0.8, seed=42))
        assert np.array_equal(a1.features, a2.features)
        assert np.array_equal(b1.features, b2.features)
        a3, _ = kd.split(ds, kd.SplitSpec(0.8, seed=43))
        assert not np.array_equal(a1.features, a3.features)

    def test_per_subject_counts_within_one(self):
        ds = kd.synth_fixture(3, 17, seed=8)
        train, _ = kd.split(ds, kd.SplitSpec(0.6, seed=0))
        for s in ds.roster:
            n = len(train.indices_of(s))
            assert n in (int(np.floor(0.6 * 17)), int(np.ceil(0.6 * 17)))

    def test_bad_fraction_rejected(self):
        ds = kd.synth_fixture(2, 4, seed=0)
        for f in (0.0, -0.1, 1.5):
            with pytest.raises(ConfigError):
                kd.split(ds, kd.SplitSpec(f, seed=0))

    def test_singleton_subject_rejected_when_stratified(self):
        ds = kd.synth_fixture(2, 1, seed=0)
        with pytest.raises(InsufficientDataError):
            kd.split(ds, kd.SplitSpec(0.5, seed=0))


class TestFixedKds:
    def test_zero_record_gives_zero_matrix(self):
        rec = kd.KeystrokeRecord("s002", 1, 1, np.zeros(31))
        assert np.array_equal(kd.to_fixed_kds(rec).matrix, np.zeros((11, 3)))

    def test_shape(self):
        rec = kd.synth_fixture(1, 1, seed=4).record(0)
        assert kd.to_fixed_kds(rec).matrix.shape == (11, 3)

    def test_index_map_oracle(self):
        # Features set to their own column index; expected matrix enumerated
        # from the column-name map, independent of the reshape implementation.
        rec = kd.KeystrokeRecord("s002", 1, 1, np.arange(31, dtype=float))
        h, dd, ud = _index_map_from_names()
        expected = np.zeros((11, 3))
        for i in range(11):
            expected[i, 0] = h[i]
        for i in range(10):
            expected[i, 1] = dd[i]
            expected[i, 2] = ud[i]
        expected[10, 1] = kd.PAD_VALUE
        expected[10, 2] = kd.PAD_VALUE
        assert np.array_equal(kd.to_fixed_kds(rec).matrix, expected)

    def test_pad_cells(self):
        rec = kd.KeystrokeRecord("s002", 1, 1, np.full(31, 7.0))
        m = kd.to_fixed_kds(rec).matrix
        assert m[10, 1] == kd.PAD_VALUE and m[10, 2] == kd.PAD_VALUE

    def test_bijection_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            feats = rng.normal(size=31)
            rec = kd.KeystrokeRecord("s002", 1, 1, feats)
            assert np.array_equal(kd.fixed_kds_features(kd.to_fixed_kds(rec)), feats)


class TestAugment:
    def test_ratio_two_triples_rows(self):
        ds = kd.synth_fixture(3, 20, seed=1)
        out = kd.augment(ds, kd.AugmentConfig(ratio=2, range_s=0.02, seed=0))
        assert len(out) == 3 * len(ds)

    def test_ratio_zero_identity(self):
        ds = kd.synth_fixture(2, 5, seed=1)
        out = kd.augment(ds, kd.AugmentConfig(ratio=0, range_s=0.02, seed=0))
        assert len(out) == len(ds)
        assert np.array_equal(out.features, ds.features)

    def test_input_not_mutated_and_labels_copied(self):
        ds = kd.synth_fixture(2, 6, seed=3)
        before = ds.features.copy()
        out = kd.augment(ds, kd.AugmentConfig(ratio=1, range_s=0.02, seed=5))
        assert np.array_equal(ds.features, before)
        assert np.array_equal(out.features[: len(ds)], ds.features)
        assert out.subjects.tolist() == ds.subjects.tolist() * 2

    def test_delta_bounds_and_uniformity(self):
        # Histogram oracle over >= 1e5 sampled deltas.
        n_rows = 3300  # 3300 rows x 31 features > 1e5 deltas
        base = kd.Dataset(
            np.array(["s001"] * n_rows, dtype=object),
            np.ones(n_rows, dtype=int),
            np.ones(n_rows, dtype=int),
            np.zeros((n_rows, 31)),
            kd.FEATURE_COLUMNS,
        )
        out = kd.augment(base, kd.AugmentConfig(ratio=1, range_s=0.02, seed=9))
        deltas = out.features[n_rows:].ravel()
        assert deltas.size >= 100_000
        assert np.all(deltas > -0.02) and np.all(deltas < 0.02)
        counts, _ = np.histogram(deltas, bins=10, range=(-0.02, 0.02))
        expected = deltas.size / 10
        assert np.all(np.abs(counts - expected) < 0.05 * expected)

    def test_seed_reproducible(self):
        ds = kd.synth_fixture(2, 8, seed=0)
        a = kd.augment(ds, kd.AugmentConfig(ratio=2, range_s=0.02, seed=4))
        b = kd.augment(ds, kd.AugmentConfig(ratio=2, range_s=0.02, seed=4))
        assert np.array_equal(a.features, b.features)

    def test_negative_ratio_rejected(self):
        ds = kd.synth_fixture(2, 3, seed=0)
        with pytest.raises(ConfigError):
            kd.augment(ds, kd.AugmentConfig(ratio=-1, range_s=0.02, seed=0))


class TestOneHot:
    def test_single_subject_column_of_ones(self):
        ds = kd.synth_fixture(1, 5, seed=0)
        m = kd.one_hot_labels(ds)
        assert m.shape == (5, 1)
        assert np.all(m == 1.0)

    def test_rows_sum_to_one(self):
        ds = kd.synth_fixture(6, 4, seed=2)
        m = kd.one_hot_labels(ds)
        assert m.shape == (24, 6)
        assert np.array_equal(m.sum(axis=1), np.ones(24))

    def test_third_subject_position(self):
        ds = kd.synth_fixture(5, 2, seed=1)
        m = kd.one_hot_labels(ds)
        row = m[ds.subjects.tolist().index(ds.roster[2])]
        assert row[2] == 1.0 and row.sum() == 1.0


class TestExploreStats:
    def test_six_subjects_h_traces(self):
        ds = kd.synth_fixture(8, 12, seed=6)
        picks = list(ds.roster[:6])
        rows = kd.explore_stats(ds, "H", picks)
        assert len(rows) == 6 * 11
        assert sorted({r[0] for r in rows}) == sorted(picks)

    def test_constant_fixture_std_zero(self):
        feats = np.full((4, 31), 0.25)
        ds = kd.Dataset(
            np.array(["s001"] * 4, dtype=object),
            np.ones(4, dtype=int),
            np.arange(1, 5),
            feats,
            kd.FEATURE_COLUMNS,
        )
        rows = kd.explore_stats(ds, "All", ["s001"])
        assert all(r[3] == 0.0 for r in rows)
        assert all(r[2] == 0.25 for r in rows)

    def test_three_row_fixture_hand_means(self):
        feats = np.zeros((3, 31))
        feats[:, 0] = [0.1, 0.2, 0.6]  # H.period: mean 0.3
        feats[:, 1] = [1.0, 2.0, 3.0]  # DD.period.t: mean 2.0
        ds = kd.Dataset(
            np.array(["s009"] * 3, dtype=object),
            np.ones(3, dtype=int),
            np.arange(1, 4),
            feats,
            kd.FEATURE_COLUMNS,
        )
        rows = {(r[0], r[1]): (r[2], r[3]) for r in kd.explore_stats(ds, "All", ["s009"])}
        m, s = rows[("s009", "H.period")]
        assert m == pytest.approx(0.3)
        assert s == pytest.approx(np.sqrt(((0.1 - 0.3) ** 2 + (0.2 - 0.3) ** 2 + (0.6 - 0.3) ** 2) / 3))
        assert rows[("s009", "DD.period.t")][0] == pytest.approx(2.0)

    def test_unknown_subject_is_lookup_error(self):
        ds = kd.synth_fixture(2, 3, seed=0)
        with pytest.raises(KeyError):
            kd.explore_stats(ds, "H", ["nobody"])


class TestSynthFixture:
    def test_counts(self):
        ds = kd.synth_fixture(2, 5, seed=3)
        assert len(ds) == 10
        assert len(ds.roster) == 2

    def test_determinism(self):
        a = kd.synth_fixture(3, 7, seed=12)
        b = kd.synth_fixture(3, 7, seed=12)
        assert np.array_equal(a.features, b.features)
        assert a.subjects.tolist() == b.subjects.tolist()

    def test_session_rep_ranges(self):
        ds = kd.synth_fixture(1, 400, seed=0)
        assert set(ds.sessions.tolist()) == set(range(1, 9))
        assert ds.reps.min() == 1 and ds.reps.max() == 50
