"""Ingestion, splitting, and the two synthetic generator families."""

import numpy as np
import pytest

from corrspace.core import TimeSeries, dft, normalize, pearson, truncated_distance_sq
from corrspace.datasets import (
    Dataset,
    SplitDataset,
    gen_example1,
    gen_example2,
    load_csv,
    save_csv,
    split,
)
from corrspace.errors import EmptyFile, InvalidM, ParseError, RaggedRows, TooSmall


def write(path, text):
    path.write_text(text)
    return str(path)


# ----------------------------------------------------------------- load_csv

def test_load_csv_basic(tmp_path):
    p = write(tmp_path / "d.csv", "1,2,3,4,5,6,7,8\n2,4,6,8,10,12,14,16\n5,3,8,1,9,2,7,4\n")
    ds = load_csv(p, "csv")
    assert (ds.n, ds.length) == (3, 8)
    np.testing.assert_array_equal(ds.ids, [0, 1, 2])
    assert ds.values[1][3] == 8.0


def test_load_csv_id_column(tmp_path):
    p = write(tmp_path / "d.csv", "7,1,2,3,4\n9,4,3,2,1\n")
    ds = load_csv(p, "csv_id")
    np.testing.assert_array_equal(ds.ids, [7, 9])
    assert ds.length == 4


def test_load_ucr_drops_label(tmp_path):
    p = write(tmp_path / "d.tsv", "1\t0.5\t0.1\t0.9\t0.3\n2\t0.2\t0.8\t0.4\t0.6\n")
    ds = load_csv(p, "ucr")
    assert ds.length == 4  # columns - 1
    assert ds.values[0][0] == 0.5


def test_load_csv_ragged(tmp_path):
    p = write(tmp_path / "d.csv", "1,2,3,4\n1,2,3\n")
    with pytest.raises(RaggedRows) as exc:
        load_csv(p, "csv")
    assert exc.value.line == 2


def test_load_csv_non_numeric(tmp_path):
    p = write(tmp_path / "d.csv", "1,2,3,4\n1,x,3,4\n")
    with pytest.raises(ParseError) as exc:
        load_csv(p, "csv")
    assert exc.value.line == 2


def test_load_csv_empty(tmp_path):
    p = write(tmp_path / "d.csv", "")
    with pytest.raises(EmptyFile):
        load_csv(p, "csv")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_csv(tmp_path / "absent.csv", "csv")


def test_load_csv_short_series(tmp_path):
    p = write(tmp_path / "d.csv", "1,2,3\n")
    with pytest.raises(ParseError):
        load_csv(p, "csv")


def test_constant_rows_dropped_with_warning(tmp_path, caplog):
    p = write(tmp_path / "d.csv", "1,2,3,4\n5,5,5,5\n4,3,2,1\n")
    with caplog.at_level("WARNING"):
        ds = load_csv(p, "csv")
    assert ds.n == 2
    assert ds.n_constant_dropped == 1
    assert any("constant" in rec.message for rec in caplog.records)
    # ids keep the original data-row positions
    np.testing.assert_array_equal(ds.ids, [0, 2])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    ds = Dataset(ids=np.array([3, 1, 4]), values=rng.standard_normal((3, 16)) * 1e6)
    p = tmp_path / "out.csv"
    save_csv(ds, p)
    back = load_csv(str(p), "csv_id")
    np.testing.assert_array_equal(back.ids, ds.ids)
    np.testing.assert_array_equal(back.values, ds.values)  # 17 sig digits: exact


def test_dataset_unique_ids_enforced():
    with pytest.raises(ValueError):
        Dataset(ids=np.array([1, 1]), values=np.zeros((2, 4)))


def test_rows_for_preserves_order():
    ds = Dataset(ids=np.array([5, 3, 9]), values=np.arange(12.0).reshape(3, 4))
    np.testing.assert_array_equal(ds.rows_for([9, 5]), [2, 0])


# -------------------------------------------------------------------- split

def test_split_exact_ratios():
    ds = Dataset(ids=np.arange(100), values=np.random.default_rng(5).standard_normal((100, 8)))
    sp = split(ds, (0.8, 0.1, 0.1), seed=0)
    assert (len(sp.train_ids), len(sp.val_ids), len(sp.test_ids)) == (80, 10, 10)


def test_split_remainder_to_train():
    ds = Dataset(ids=np.arange(101), values=np.random.default_rng(7).standard_normal((101, 8)))
    sp = split(ds, (0.8, 0.1, 0.1), seed=0)
    assert (len(sp.train_ids), len(sp.val_ids), len(sp.test_ids)) == (81, 10, 10)


def test_split_deterministic_and_disjoint():
    ds = Dataset(ids=np.arange(50), values=np.random.default_rng(9).standard_normal((50, 8)))
    a, b = split(ds, seed=4), split(ds, seed=4)
    np.testing.assert_array_equal(a.train_ids, b.train_ids)
    np.testing.assert_array_equal(a.test_ids, b.test_ids)
    union = np.concatenate([a.train_ids, a.val_ids, a.test_ids])
    assert sorted(union.tolist()) == list(range(50))


def test_split_too_small():
    ds = Dataset(ids=np.arange(9), values=np.random.default_rng(11).standard_normal((9, 8)))
    with pytest.raises(TooSmall):
        split(ds)


def test_split_overlap_rejected():
    with pytest.raises(ValueError):
        SplitDataset(train_ids=np.array([1, 2]), val_ids=np.array([2]), test_ids=np.array([3]), seed=0)


# ------------------------------------------------------------- gen_example1

def test_gen_example1_quarter_identity():
    ds = gen_example1(20, 64, seed=1)
    h = ds.normalized_matrix()
    for i, j in [(0, 1), (2, 17), (5, 19)]:
        corr = float(h[i] @ h[j])
        d2 = truncated_distance_sq(dft(h[i]), dft(h[j]), 16)
        assert abs(4.0 * d2 - (2.0 - 2.0 * corr)) <= 1e-8


def test_gen_example1_single_series():
    ds = gen_example1(1, 16, seed=0)
    assert (ds.n, ds.length) == (1, 16)
    normalize(ds.series(0))  # non-constant, normalizable


def test_gen_example1_real_and_deterministic():
    a = gen_example1(5, 32, seed=42)
    b = gen_example1(5, 32, seed=42)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.dtype == np.float64
    # spectrum structure: second quarter copies the first
    c = dft(a.values[0]).coeffs
    np.testing.assert_allclose(c[1:8], c[9:16], atol=1e-9)


def test_gen_example1_m_validation():
    for bad in (6, 9, 4):
        with pytest.raises(InvalidM):
            gen_example1(3, bad)


# ------------------------------------------------------------- gen_example2

def test_gen_example2_low_coefficient_spread():
    # coefficients 1..m vary across series with spread ~ eps, the rest at
    # unit scale
    ds = gen_example2(200, 64, 4, eps=0.01, seed=3)
    c = np.fft.fft(ds.values, axis=1) / np.sqrt(64)
    low = c[:, 1:5]
    rest = c[:, 5:32]
    low_spread = np.abs(low - low.mean(axis=0)).std()
    rest_spread = np.abs(rest - rest.mean(axis=0)).std()
    assert low_spread < 0.05  # ~ eps * sigma scale
    assert rest_spread > 0.2  # unit scale


def test_gen_example2_eps_zero_exactly_equal():
    ds = gen_example2(10, 32, 3, eps=0.0, seed=5)
    c = np.fft.fft(ds.values, axis=1) / np.sqrt(32)
    low = c[:, 1:4]
    np.testing.assert_allclose(low - low[0], 0, atol=1e-12)


def test_gen_example2_real_and_deterministic():
    a = gen_example2(5, 16, 2, seed=11)
    b = gen_example2(5, 16, 2, seed=11)
    np.testing.assert_array_equal(a.values, b.values)
    for i in range(5):
        normalize(a.series(i))


def test_gen_example2_m_validation():
    with pytest.raises(InvalidM):
        gen_example2(3, 15, 2)  # odd M
    with pytest.raises(InvalidM):
        gen_example2(3, 16, 8)  # m >= M/2
    with pytest.raises(InvalidM):
        gen_example2(3, 16, 0)


def test_generators_pass_core_invariants():
    for ds in (gen_example1(8, 32, seed=2), gen_example2(8, 32, 3, seed=2)):
        assert np.all(np.isfinite(ds.values))
        for i in range(ds.n):
            ns = normalize(ds.series(i))
            assert abs(np.linalg.norm(ns.values) - 1.0) <= 1e-9
            c = dft(ds.values[i]).coeffs
            assert abs(np.sum(np.abs(c) ** 2) - np.sum(ds.values[i] ** 2)) <= 1e-9


def test_pearson_identity_on_generated_data():
    ds = gen_example1(6, 32, seed=13)
    h = ds.normalized_matrix()
    corr = pearson(ds.series(0), ds.series(1))
    assert corr == pytest.approx(float(h[0] @ h[1]), abs=1e-12)
    assert isinstance(ds.series(0), TimeSeries)
