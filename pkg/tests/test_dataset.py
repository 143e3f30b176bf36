import numpy as np
import pytest

from flowpinn import dataset as ds
from flowpinn.datafile import write_columnar


def synthetic_records(designs=ds.ALL_DESIGNS, n_pts=6, t_end=6.0, dt=0.05, seed=0):
    """Mimic the generator's layout: per design, per stamp, n_pts ROI points."""
    rng = np.random.default_rng(seed)
    stamps = [k * dt for k in range(round(t_end / dt) + 1)]
    cols = {name: [] for name in ("x", "y", "t", "u_inlet", "d_y", "u", "v", "p")}
    for u_in, d_y in designs:
        for t in stamps:
            cols["x"].append(rng.uniform(0, 1.5, n_pts))
            cols["y"].append(rng.uniform(0, 0.3, n_pts))
            cols["t"].append(np.full(n_pts, t))
            cols["u_inlet"].append(np.full(n_pts, u_in))
            cols["d_y"].append(np.full(n_pts, d_y))
            for f in ("u", "v", "p"):
                cols[f].append(rng.normal(size=n_pts))
    return ds.RecordSet({k: np.concatenate(v) for k, v in cols.items()})


N_PTS = 6
N_STAMPS = 121  # 0.00 .. 6.00
N_TRAIN_STAMPS = 51  # 0.1 grid within [0, 5]
N_COVERED = 101
N_UNCOVERED = 20


class TestBuildSplits:
    def setup_method(self):
        self.records = synthetic_records(n_pts=N_PTS)
        self.splits = ds.build_splits(self.records, ds.SplitSpec.paper())

    def _design_rows(self, design):
        for row in self.splits.manifest.rows:
            if row[0] == design:
                return row[1:]
        raise AssertionError(f"{design} missing from manifest")

    def test_val_design_all_validation_when_covered(self):
        tr, va, te = self._design_rows((0.9, 0.09))
        assert tr == 0
        assert va == N_PTS * N_COVERED
        assert te == N_PTS * N_UNCOVERED  # the (5, 6] tail goes to test

    def test_pure_test_design(self):
        tr, va, te = self._design_rows((0.8, 0.11))
        assert (tr, va) == (0, 0)
        assert te == N_PTS * N_STAMPS

    def test_train_design_counts(self):
        tr, va, te = self._design_rows((0.8, 0.08))
        assert tr == N_PTS * N_TRAIN_STAMPS
        assert va == 0
        assert te == N_PTS * (N_STAMPS - N_TRAIN_STAMPS)

    def test_complement_design_split(self):
        tr, va, te = self._design_rows((0.9, 0.10))
        assert tr == N_PTS * N_TRAIN_STAMPS
        assert va == N_PTS * (N_COVERED - N_TRAIN_STAMPS)
        assert te == N_PTS * N_UNCOVERED

    def test_complement_times_disjoint(self):
        sel_tr = self.splits.train
        sel_va = self.splits.validation
        tr_times = set(np.round(sel_tr.data["t"][np.isclose(sel_tr.data["u_inlet"], 0.9)
                                                 & np.isclose(sel_tr.data["d_y"], 0.10)], 9))
        va_times = set(np.round(sel_va.data["t"][np.isclose(sel_va.data["u_inlet"], 0.9)
                                                 & np.isclose(sel_va.data["d_y"], 0.10)], 9))
        assert tr_times and va_times
        assert not (tr_times & va_times)

    def test_partition(self):
        total = len(self.splits.train) + len(self.splits.validation) + len(self.splits.test)
        assert total == len(self.records)
        assert self.splits.manifest.totals == (len(self.splits.train),
                                               len(self.splits.validation),
                                               len(self.splits.test))

    def test_disjoint_keys(self):
        def keys(rs):
            return set(zip(np.round(rs.data["x"], 9), np.round(rs.data["y"], 9),
                           np.round(rs.data["t"], 9), np.round(rs.data["u_inlet"], 9),
                           np.round(rs.data["d_y"], 9)))
        k_tr = keys(self.splits.train)
        k_va = keys(self.splits.validation)
        k_te = keys(self.splits.test)
        assert not (k_tr & k_va) and not (k_tr & k_te) and not (k_va & k_te)

    def test_train_times_on_grid(self):
        t = self.splits.train.data["t"]
        assert np.all(t <= 5.0 + 1e-9)
        assert np.all(np.abs(t - 0.1 * np.round(t / 0.1)) <= 1e-9)

    def test_counting_oracle(self):
        # independent enumeration over (design, stamp) pairs
        want_train = want_val = want_test = 0
        spec = self.splits.spec
        for dsn in ds.ALL_DESIGNS:
            for k in range(N_STAMPS):
                t = k * 0.05
                covered = t <= 5.0 + 1e-9
                on_grid = (k % 2 == 0)  # 0.05 grid: even stamps sit on the 0.1 grid
                if dsn in spec.train_designs and covered and on_grid:
                    want_train += N_PTS
                elif dsn in spec.val_full_designs and covered:
                    want_val += N_PTS
                elif dsn in spec.val_complement_designs and covered and not on_grid:
                    want_val += N_PTS
                else:
                    want_test += N_PTS
        assert self.splits.manifest.totals == (want_train, want_val, want_test)

    def test_missing_design(self):
        partial = synthetic_records(designs=ds.ALL_DESIGNS[:10])
        with pytest.raises(ds.IncompleteDatasetError):
            ds.build_splits(partial, ds.SplitSpec.paper())

    def test_desk_spec(self):
        splits = ds.build_splits(self.records, ds.SplitSpec.desk())
        tr_designs = set(zip(np.round(splits.train.data["u_inlet"], 6),
                             np.round(splits.train.data["d_y"], 6)))
        assert tr_designs == set(ds.DESK_TRAIN_DESIGNS)
        assert splits.manifest.totals[0] == 4 * N_PTS * N_TRAIN_STAMPS

    def test_from_files(self, tmp_path):
        paths = []
        for i, dsn in enumerate(ds.ALL_DESIGNS):
            rs = synthetic_records(designs=[dsn], n_pts=3)
            path = tmp_path / f"d{i}.bin"
            write_columnar(path, rs.data)
            paths.append(path)
        splits = ds.build_splits(paths, ds.SplitSpec.paper())
        assert sum(splits.manifest.totals) == 12 * 3 * N_STAMPS

    def test_manifest_text(self):
        text = self.splits.manifest.to_text()
        lines = text.strip().splitlines()
        assert len(lines) == 14  # header + 12 designs + sum
        assert lines[-1].startswith("Sum")
        assert "{0.9, 0.09}" in text


class TestMinibatches:
    def test_partition_sizes(self):
        rs = synthetic_records(designs=[(0.9, 0.1)], n_pts=1).subset(np.arange(10))
        sizes = [len(x) for x, _ in ds.minibatches(rs, 4, seed=0)]
        assert sizes == [4, 4, 2]

    def test_same_seed_same_batches(self):
        rs = synthetic_records(designs=[(0.9, 0.1)], n_pts=2)
        a = [x for x, _ in ds.minibatches(rs, 7, seed=3)]
        b = [x for x, _ in ds.minibatches(rs, 7, seed=3)]
        for xa, xb in zip(a, b):
            assert (xa == xb).all()

    def test_epoch_is_exact_multiset(self):
        rs = synthetic_records(designs=[(0.9, 0.1)], n_pts=2)
        got = np.concatenate([x for x, _ in ds.minibatches(rs, 13, seed=5)])
        want = rs.inputs()
        order_got = np.lexsort(got.T)
        order_want = np.lexsort(want.T)
        assert (got[order_got] == want[order_want]).all()

    def test_empty_split(self):
        rs = synthetic_records(designs=[(0.9, 0.1)], n_pts=1).subset(np.array([], dtype=int))
        with pytest.raises(ds.EmptySplitError):
            next(ds.minibatches(rs, 4, seed=0))


class TestCollocation:
    def test_within_bounds(self):
        dom = ds.CollocationDomain()
        pts = ds.sample_collocation(5000, dom, seed=1)
        for j, (lo, hi) in enumerate(dom.bounds):
            assert np.all(pts[:, j] >= lo) and np.all(pts[:, j] <= hi)

    def test_deterministic(self):
        a = ds.sample_collocation(100, seed=7)
        b = ds.sample_collocation(100, seed=7)
        assert (a == b).all()

    def test_mean_of_x(self):
        pts = ds.sample_collocation(1_000_000, seed=2)
        assert abs(pts[:, 0].mean() - 0.75) < 0.002

    def test_cylinder_mask_inert_in_local_frame(self):
        # the footprint sits left of the box, so masking changes nothing
        dom = ds.CollocationDomain(mask_cylinder=True)
        a = ds.sample_collocation(500, dom, seed=9)
        b = ds.sample_collocation(500, ds.CollocationDomain(), seed=9)
        assert (a == b).all()
        assert not ds._inside_cylinder(a).any()
