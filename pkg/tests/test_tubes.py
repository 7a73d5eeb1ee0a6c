import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubefusion.clustering import ActionBox
from tubefusion.errors import NoMotion, ShapeError
from tubefusion.tubes import (MotionTube, TubeMatrix, build_motion_tubes, equalize_box_counts,
                              greedy_link, link_boxes, normalize_tube_boxes, segment_tubes)


def box_at(cx, cy, f=0, r=8):
    return ActionBox(cx - r / 2, cy - r / 2, r, f)


def centers(boxes):
    return [b.centroid for b in boxes]


class TestLink:
    def test_identity(self):
        boxes = [box_at(10, 10), box_at(40, 10), box_at(25, 40)]
        assert link_boxes(boxes, boxes).tolist() == [0, 1, 2]

    def test_swap(self):
        a = [box_at(10, 10), box_at(40, 10)]
        b = [box_at(39, 10), box_at(11, 10)]
        assert link_boxes(a, b).tolist() == [1, 0]

    def test_two_by_two_matrix(self):
        d = np.array([[1.0, 5.0], [2.0, 1.0]])
        a = greedy_link(d)
        assert a.tolist() == [0, 1] and d[[0, 1], a].sum() == 2.0

    def test_greedy_not_optimal(self):
        # row 0 grabs column 0 even though the global optimum differs
        d = np.array([[1.0, 2.0], [1.5, 10.0]])
        assert greedy_link(d).tolist() == [0, 1]

    def test_tie_lowest_column(self):
        assert greedy_link(np.ones((3, 3))).tolist() == [0, 1, 2]

    def test_errors(self):
        with pytest.raises(ShapeError):
            link_boxes([box_at(1, 1)], [box_at(1, 1), box_at(2, 2)])
        with pytest.raises(ShapeError):
            link_boxes([], [])

    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_bijection_and_row_greedy(self, n, seed):
        d = np.random.default_rng(seed).random((n, n))
        a = greedy_link(d)
        assert sorted(a.tolist()) == list(range(n))
        # oracle: replay the row-order rule with explicit deletion
        cols = list(range(n))
        for i in range(n):
            best = min(cols, key=lambda c: (d[i, c], c))
            assert a[i] == best
            cols.remove(best)


class TestEqualize:
    def test_unchanged(self):
        frames = [[box_at(10, 10, k), box_at(40, 40, k)] for k in range(3)]
        out, n = equalize_box_counts(frames)
        assert n == 2 and [centers(f) for f in out] == [centers(f) for f in frames]

    def test_surplus_drops_farthest(self):
        frames = [[box_at(10, 10), box_at(40, 40)],
                  [box_at(11, 10), box_at(41, 40), box_at(60, 5)],
                  [box_at(12, 10), box_at(42, 40)]]
        out, n = equalize_box_counts(frames)
        assert n == 2
        assert sorted(centers(out[1])) == [(11, 10), (41, 40)]

    def test_regression_fills_deficit(self):
        frames = [[box_at(10, 10), box_at(40, 40)],
                  [box_at(12, 10), box_at(40, 40)],
                  [box_at(40, 40)],
                  [box_at(16, 10), box_at(40, 40), box_at(5, 60)]]
        out, n = equalize_box_counts(frames)
        assert n == 2
        assert centers(out[2])[0] == (14, 10)
        assert centers(out[3]) == [(16, 10), (40, 40)]

    def test_copy_with_single_history_point(self):
        frames = [[box_at(10, 10), box_at(40, 40)], [box_at(41, 40)],
                  [box_at(12, 10), box_at(42, 40), box_at(5, 60)]]
        out, n = equalize_box_counts(frames)
        assert n == 2
        # chain 0 has one history point at frame 1, so its box is copied
        assert centers(out[1]) == [(10, 10), (41, 40)]
        assert out[1][0].f == 1

    def test_no_anchor_uses_closest_count(self):
        frames = [[box_at(10, 10)] * 3, [box_at(10, 10)]]
        out, n = equalize_box_counts(frames)
        assert n == 2 and [len(f) for f in out] == [2, 2]

    def test_no_motion(self):
        with pytest.raises(NoMotion):
            equalize_box_counts([[], [box_at(5, 5)], []])

    @given(st.lists(st.integers(0, 5), min_size=2, max_size=15), st.integers(0, 1000))
    @settings(max_examples=80, deadline=None)
    def test_every_frame_has_n(self, counts, seed):
        rng = np.random.default_rng(seed)
        frames = [[box_at(*rng.uniform(4, 60, 2), f=k) for _ in range(c)]
                  for k, c in enumerate(counts)]
        n_expected = sum(counts) // len(counts)
        if n_expected == 0:
            with pytest.raises(NoMotion):
                equalize_box_counts(frames, frame_size=(64, 64))
            return
        out, n = equalize_box_counts(frames, frame_size=(64, 64))
        assert n == n_expected
        for k, f in enumerate(out):
            assert len(f) == n and all(b.f == k for b in f)
            assert all(0 <= b.x <= 64 - b.r and 0 <= b.y <= 64 - b.r for b in f)


class TestTubes:
    def frames(self, z=3, n=2):
        return [[box_at(10 + 30 * i + k, 10, k) for i in range(n)] for k in range(z)]

    def test_identity_assignments(self):
        fr = self.frames()
        m, tubes = build_motion_tubes(fr, [np.arange(2)] * 2)
        assert [t.boxes for t in tubes] == [tuple(f[0] for f in fr), tuple(f[1] for f in fr)]
        assert m.rows.shape == (6, 5)
        assert m.rows[:, :2].tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [2, 0], [2, 1]]

    def test_swap_then_identity(self):
        fr = self.frames()
        _, tubes = build_motion_tubes(fr, [np.array([1, 0]), np.array([0, 1])])
        assert tubes[0].boxes == (fr[0][0], fr[1][1], fr[2][1])
        assert tubes[1].boxes == (fr[0][1], fr[1][0], fr[2][0])

    def test_single_tube(self):
        fr = self.frames(4, 1)
        _, tubes = build_motion_tubes(fr, [np.array([0])] * 3)
        assert len(tubes) == 1 and len(tubes[0]) == 4

    @given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 1000))
    def test_disjoint_chains(self, z, n, seed):
        rng = np.random.default_rng(seed)
        fr = [[box_at(4 * i + 100 * k, 0, k) for i in range(n)] for k in range(z)]
        asg = [rng.permutation(n) for _ in range(z - 1)]
        m, tubes = build_motion_tubes(fr, asg)
        assert m.rows.shape == (z * n, 5)
        for k in range(z):
            assert sorted(id(t.boxes[k]) for t in tubes) == sorted(id(b) for b in fr[k])
        pairs = {(int(r[0]), int(r[1])) for r in m.rows}
        assert len(pairs) == z * n

    def test_matrix_roundtrip(self, tmp_path):
        m, _ = build_motion_tubes(self.frames(), [np.arange(2)] * 2)
        m.save(tmp_path / "t.vten", {"segment": 4})
        back = TubeMatrix.load(tmp_path / "t.vten")
        assert np.array_equal(back.rows, m.rows) and back.n_tubes == 2

    def test_matrix_shape_checked(self):
        with pytest.raises(ShapeError):
            TubeMatrix(np.zeros((5, 5)), 3, 2)


class TestNormalize:
    def test_max_side(self):
        t = MotionTube(0, tuple(ActionBox(20, 20, r, k) for k, r in enumerate((10, 12, 14))))
        out = normalize_tube_boxes(t)
        assert [b.r for b in out.boxes] == [14, 14, 14]
        for a, b in zip(t.boxes, out.boxes):
            assert np.allclose(a.centroid, b.centroid, atol=0.5)

    def test_uniform_unchanged_and_idempotent(self):
        t = MotionTube(0, tuple(ActionBox(20 + k, 20, 10, k) for k in range(3)))
        assert normalize_tube_boxes(t) == t
        assert normalize_tube_boxes(normalize_tube_boxes(t)) == normalize_tube_boxes(t)

    def test_clamped(self):
        t = MotionTube(0, (box_at(3, 30, 0, 8), box_at(30, 30, 1, 20)))
        out = normalize_tube_boxes(t, frame_size=(64, 64))
        assert out.boxes[0].x == 0 and out.boxes[0].r == 20


def test_segment_tubes_end_to_end():
    per_frame = [[box_at(10 + k, 10, k), box_at(50, 10 + k, k)] for k in range(15)]
    per_frame[5] = per_frame[5][:1]
    per_frame[9] = per_frame[9] + [box_at(30, 55, 9)]
    m, tubes = segment_tubes(per_frame, list(range(15)), (64, 64))
    assert m.n_tubes == 2 and m.rows.shape == (30, 5)
    for t in tubes:
        xs = [b.centroid[0] for b in t.boxes]
        assert max(xs) - min(xs) < 20  # each tube stays on its own blob
        assert len({b.r for b in t.boxes}) == 1
    keys = list(itertools.chain.from_iterable(t.boxes for t in tubes))
    assert len(keys) == 30
