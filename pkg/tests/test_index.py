"""k-d tree index: exactness against brute force, tie handling, radius
queries, and the on-disk format.
"""

import json
import math
import struct

import numpy as np
import pytest

from corrspace.errors import DimensionMismatch, EmptyInput
from corrspace.index import (
    INDEX_MAGIC,
    KdTree,
    build,
    load_index,
    save_index,
    threshold_radius_sq,
)


def brute_top_k(points, ids, q, k):
    """Reference answer: squared distances, ties broken by ascending id."""
    d2 = np.sum((points - q) ** 2, axis=1)
    order = np.lexsort((ids, d2))[:k]
    return ids[order], d2[order]


def assert_same_answer(res, want_ids, want_d2):
    # ids and their order are exact; the distances come from a different
    # (expanded-inner-product) kernel than the oracle, so compare to 1e-9
    np.testing.assert_array_equal(res.ids, want_ids)
    np.testing.assert_allclose(res.distances_sq, want_d2, rtol=0, atol=1e-9)


def random_tree(n, m, seed, integer=False):
    rng = np.random.default_rng(seed)
    if integer:
        points = rng.integers(0, 3, size=(n, m)).astype(np.float64)
    else:
        points = rng.standard_normal((n, m))
    ids = rng.permutation(n).astype(np.int64)
    return build(points, ids), points, ids


# -------------------------------------------------------------- construction

def test_single_point():
    tree = build(np.array([[1.0, 2.0]]))
    assert tree.n == 1 and tree.m == 2 and tree.height == 1
    res = tree.top_k(np.array([0.0, 0.0]), 1)
    assert list(res.ids) == [0]
    assert res.distances_sq[0] == pytest.approx(5.0)


def test_empty_rejected():
    with pytest.raises(EmptyInput):
        build(np.empty((0, 3)))


def test_dimension_mismatch_on_query():
    tree = build(np.random.default_rng(0).standard_normal((10, 4)))
    with pytest.raises(DimensionMismatch):
        tree.top_k(np.zeros(3), 1)
    with pytest.raises(DimensionMismatch):
        tree.within_radius(np.zeros(5), 1.0)


def test_k_out_of_range():
    tree = build(np.random.default_rng(0).standard_normal((10, 4)))
    with pytest.raises(ValueError):
        tree.top_k(np.zeros(4), 0)
    # too-large k is capped: the full ranking comes back
    assert len(tree.top_k(np.zeros(4), 11)) == 10


def test_height_bound():
    # balanced median splits: height <= ceil(log2 n) + 1
    for n in (1, 2, 3, 63, 64, 65, 500, 1000):
        tree = build(np.random.default_rng(n).standard_normal((n, 3)))
        assert tree.height <= math.ceil(math.log2(n)) + 1 if n > 1 else tree.height == 1


def test_ids_default_to_row_numbers():
    pts = np.random.default_rng(1).standard_normal((20, 2))
    tree = build(pts)
    res = tree.top_k(pts[7], 1)
    assert list(res.ids) == [7]
    assert res.distances_sq[0] == 0.0


# -------------------------------------------------------------------- top_k

def test_indexed_points_find_themselves():
    tree, points, ids = random_tree(1000, 16, seed=3)
    for row in np.random.default_rng(4).choice(1000, size=50, replace=False):
        res = tree.top_k(points[row], 1)
        assert res.ids[0] == ids[row]
        assert res.distances_sq[0] == 0.0


def test_k_equals_n_gives_full_sorted_ranking():
    tree, points, ids = random_tree(120, 4, seed=5)
    q = np.random.default_rng(6).standard_normal(4)
    res = tree.top_k(q, 120)
    assert_same_answer(res, *brute_top_k(points, ids, q, 120))
    assert np.all(np.diff(res.distances_sq) >= 0.0)


@pytest.mark.parametrize("n,m", [(50, 2), (400, 8), (1000, 16)])
def test_top_k_matches_brute_force(n, m):
    tree, points, ids = random_tree(n, m, seed=n + m)
    rng = np.random.default_rng(99)
    for k in (1, 5, min(n, 64)):
        for _ in range(25):
            q = rng.standard_normal(m)
            assert_same_answer(tree.top_k(q, k), *brute_top_k(points, ids, q, k))


def test_top_k_with_heavy_ties():
    # integer coordinates force exact distance ties; id order must decide
    tree, points, ids = random_tree(300, 3, seed=11, integer=True)
    rng = np.random.default_rng(12)
    for _ in range(40):
        q = rng.integers(0, 3, size=3).astype(np.float64)
        for k in (1, 10, 50):
            res = tree.top_k(q, k)
            want_ids, want_d2 = brute_top_k(points, ids, q, k)
            np.testing.assert_array_equal(res.ids, want_ids)
            # small-integer coordinates: both kernels are exact here
            np.testing.assert_array_equal(res.distances_sq, want_d2)


def test_duplicate_points_tie_break_by_id():
    points = np.zeros((5, 2))
    ids = np.array([42, 7, 99, 3, 55], dtype=np.int64)
    tree = build(points, ids)
    res = tree.top_k(np.array([1.0, 0.0]), 3)
    assert list(res.ids) == [3, 7, 42]


def test_query_result_len():
    tree, _, _ = random_tree(30, 2, seed=13)
    assert len(tree.top_k(np.zeros(2), 7)) == 7


# ------------------------------------------------------------ within_radius

def test_within_radius_zero_at_duplicates():
    points = np.vstack([np.zeros((4, 2)), np.ones((3, 2))])
    ids = np.arange(7, dtype=np.int64)
    tree = build(points, ids)
    res = tree.within_radius(np.zeros(2), 0.0)
    assert sorted(res.ids) == [0, 1, 2, 3]


def test_within_radius_matches_brute_filter():
    tree, points, ids = random_tree(500, 8, seed=17)
    rng = np.random.default_rng(18)
    for _ in range(25):
        q = rng.standard_normal(8)
        r2 = float(rng.uniform(0.5, 30.0))
        res = tree.within_radius(q, r2)
        d2 = np.sum((points - q) ** 2, axis=1)
        keep = d2 <= r2
        want_ids, want_d2 = brute_top_k(points[keep], ids[keep], q, int(keep.sum()))
        assert_same_answer(res, want_ids, want_d2)


def test_within_radius_monotone_in_radius():
    tree, _, _ = random_tree(200, 4, seed=19)
    q = np.random.default_rng(20).standard_normal(4)
    sizes = [len(tree.within_radius(q, r2)) for r2 in (0.0, 0.5, 2.0, 8.0, 1e6)]
    assert sizes == sorted(sizes)
    assert sizes[-1] == 200


def test_within_radius_covers_everything_at_diameter():
    tree, points, _ = random_tree(64, 3, seed=21)
    q = points.mean(axis=0)
    diameter_sq = np.max(np.sum((points - q) ** 2, axis=1))
    assert len(tree.within_radius(q, diameter_sq)) == 64


def test_top_k_and_radius_agree_at_kth_distance():
    # with all pairwise distances distinct, the radius query at the k-th
    # top_k distance returns exactly the top-k set
    tree, points, ids = random_tree(150, 6, seed=23)
    q = np.random.default_rng(24).standard_normal(6)
    for k in (1, 10, 40):
        top = tree.top_k(q, k)
        ball = tree.within_radius(q, float(top.distances_sq[-1]))
        assert sorted(ball.ids) == sorted(top.ids)


# ---------------------------------------------------------------- threshold

def test_threshold_radius_sq():
    assert threshold_radius_sq(0.9) == pytest.approx(0.1)
    assert threshold_radius_sq(0.0) == pytest.approx(1.0)
    assert threshold_radius_sq(0.9, slack=2.0) == pytest.approx(0.2)


def test_threshold_radius_rejects_bad_eta():
    with pytest.raises(ValueError):
        threshold_radius_sq(1.5)
    with pytest.raises(ValueError):
        threshold_radius_sq(-1.1)
    with pytest.raises(ValueError):
        threshold_radius_sq(0.5, slack=0.0)


# ------------------------------------------------------------------- format

def test_save_load_round_trip(tmp_path):
    tree, points, ids = random_tree(200, 8, seed=25)
    path = tmp_path / "idx.bin"
    save_index(tree, str(path), meta={"method": "dft", "m": 8})
    loaded, meta = load_index(str(path))
    assert meta == {"method": "dft", "m": 8}
    assert (loaded.n, loaded.m) == (tree.n, tree.m)
    q = np.random.default_rng(26).standard_normal(8)
    for k in (1, 17, 200):
        a, b = tree.top_k(q, k), loaded.top_k(q, k)
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.distances_sq, b.distances_sq)


def test_save_load_empty_meta(tmp_path):
    tree, _, _ = random_tree(10, 2, seed=27)
    path = tmp_path / "idx.bin"
    save_index(tree, str(path))
    _, meta = load_index(str(path))
    assert meta == {}


def test_index_file_layout(tmp_path):
    tree, points, ids = random_tree(12, 3, seed=29)
    path = tmp_path / "idx.bin"
    save_index(tree, str(path), meta={"k": 1})
    blob = path.read_bytes()
    assert blob[:4] == INDEX_MAGIC
    version, n, m = struct.unpack_from("<III", blob, 4)
    assert (version, n, m) == (1, 12, 3)
    (meta_len,) = struct.unpack_from("<I", blob, 16)
    meta = json.loads(blob[20 : 20 + meta_len].decode("utf-8"))
    assert meta == {"k": 1}
    rest = blob[20 + meta_len :]
    got_ids = np.frombuffer(rest[: 12 * 8], dtype="<i8")
    got_pts = np.frombuffer(rest[12 * 8 :], dtype="<f8").reshape(12, 3)
    np.testing.assert_array_equal(got_ids, ids)
    np.testing.assert_array_equal(got_pts, points)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_index(str(path))


def test_resave_is_byte_identical(tmp_path):
    tree, _, _ = random_tree(64, 4, seed=31)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_index(tree, str(p1), meta={"m": 4})
    loaded, meta = load_index(str(p1))
    save_index(loaded, str(p2), meta=meta)
    assert p1.read_bytes() == p2.read_bytes()


# ------------------------------------------------------- scan cutoff regime

def test_small_inputs_use_same_contract():
    # below the leaf-scan cutoff everything is a single brute-forced leaf;
    # answers must be indistinguishable from the tree regime
    for n in (1, 2, 63, 64, 65, 130):
        tree, points, ids = random_tree(n, 5, seed=n)
        q = np.random.default_rng(1000 + n).standard_normal(5)
        k = min(n, 9)
        assert_same_answer(tree.top_k(q, k), *brute_top_k(points, ids, q, k))
