from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from misfit.dataset import (
    Grid,
    GridFunction,
    GridKernel,
    OutcomeKind,
    SparseFunctionalDataset,
    Subject,
    inner_product,
    load_long_csv,
    make_grid,
    write_long_csv,
)
from misfit.errors import (
    DuplicateTime,
    GridMismatch,
    InconsistentOutcome,
    InvalidDataset,
    InvalidGrid,
    MalformedRow,
    TimeOutOfRange,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows_two_ids(tmp_path):
    p = _write(tmp_path, "subject_id,time,value,outcome\na,0.5,1.0,2\nb,0.1,3.0,1\na,0.2,0.0,2\n")
    ds = load_long_csv(p, "continuous")
    assert ds.n == 2
    assert list(ds.counts) == [2, 1]
    a = ds.subjects[0]
    assert list(a.times) == [0.2, 0.5]  # sorted by time
    assert list(a.values) == [0.0, 1.0]


def test_time_out_of_range(tmp_path):
    p = _write(tmp_path, "subject_id,time,value,outcome\na,1.5,1.0,2\nb,0.1,3.0,1\n")
    with pytest.raises(TimeOutOfRange):
        load_long_csv(p)


def test_binary_file_accepted(tmp_path):
    p = _write(tmp_path, "subject_id,time,value,outcome\na,0.1,1.0,0\nb,0.1,3.0,1\nc,0.3,3.0,1\n")
    ds = load_long_csv(p, "binary")
    assert ds.outcome_kind is OutcomeKind.BINARY
    assert list(ds.outcomes) == [0.0, 1.0, 1.0]


def test_binary_single_class_rejected(tmp_path):
    p = _write(tmp_path, "subject_id,time,value,outcome\na,0.1,1.0,1\nb,0.1,3.0,1\n")
    with pytest.raises(InvalidDataset, match="missing class"):
        load_long_csv(p, "binary")


@pytest.mark.parametrize(
    "body, exc",
    [
        ("a,zero,1.0,2\nb,0.1,3.0,1\n", MalformedRow),
        ("a,0.1,1.0\nb,0.1,3.0,1\n", MalformedRow),
        ("a,0.1,1.0,2\na,0.2,3.0,1\n", InconsistentOutcome),
        ("a,0.1,1.0,2\na,0.1,3.0,2\nb,0.3,1,1\n", DuplicateTime),
        ("a,-0.1,1.0,2\nb,0.1,3.0,1\n", TimeOutOfRange),
    ],
)
def test_ingestion_errors(tmp_path, body, exc):
    p = _write(tmp_path, "subject_id,time,value,outcome\n" + body)
    with pytest.raises(exc):
        load_long_csv(p)


def test_bad_header(tmp_path):
    p = _write(tmp_path, "id,t,x,y\na,0.1,1.0,2\n")
    with pytest.raises(MalformedRow):
        load_long_csv(p)


def test_rescale_time(tmp_path):
    p = _write(tmp_path, "subject_id,time,value,outcome\na,10,1.0,2\na,20,1.5,2\nb,30,3.0,1\n")
    with pytest.raises(TimeOutOfRange):
        load_long_csv(p)
    ds = load_long_csv(p, rescale_time=True)
    assert list(ds.subjects[0].times) == [0.0, 0.5]
    assert list(ds.subjects[1].times) == [1.0]


def test_subject_invariants():
    with pytest.raises(ValueError):
        Subject("a", [0.2, 0.1], [1, 2], 0.0)
    with pytest.raises(ValueError):
        Subject("a", [0.1], [1, 2], 0.0)
    with pytest.raises(ValueError):
        Subject("a", [], [], 0.0)
    with pytest.raises(ValueError):
        Subject("a", [0.1], [float("nan")], 0.0)


def test_dataset_needs_two_subjects():
    with pytest.raises(InvalidDataset):
        SparseFunctionalDataset((Subject("a", [0.1], [1.0], 0.0),), OutcomeKind.CONTINUOUS)


@pytest.mark.parametrize("M, w", [(2, [0.5, 0.5]), (3, [0.25, 0.5, 0.25])])
def test_make_grid_small(M, w):
    g = make_grid(M)
    assert np.allclose(g.points, np.linspace(0, 1, M))
    assert np.allclose(g.weights, w, atol=1e-15)


def test_make_grid_normalized():
    assert abs(make_grid(101).weights.sum() - 1.0) < 1e-12


def test_make_grid_invalid():
    with pytest.raises(InvalidGrid):
        make_grid(1)


def test_grid_invariants():
    with pytest.raises(InvalidGrid):
        Grid(np.array([0.0, 0.6, 0.5, 1.0]), np.full(4, 0.25))
    with pytest.raises(InvalidGrid):
        Grid(np.array([0.0, 1.0]), np.array([0.5, 0.6]))


def test_inner_product_examples():
    g = make_grid(201)
    one = GridFunction(g, np.ones(g.M))
    assert abs(inner_product(one, one) - 1.0) < 1e-12
    s = GridFunction(g, np.sin(2 * np.pi * g.points))
    c = GridFunction(g, np.cos(2 * np.pi * g.points))
    assert abs(inner_product(s, s) - 0.5) < 1e-4
    assert abs(inner_product(s, c)) < 1e-4


def test_inner_product_grid_mismatch():
    a = GridFunction(make_grid(5), np.ones(5))
    b = GridFunction(make_grid(6), np.ones(6))
    with pytest.raises(GridMismatch):
        inner_product(a, b)


def test_kernel_symmetry_check():
    g = make_grid(3)
    with pytest.raises(ValueError):
        GridKernel(g, np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


@given(
    M=st.integers(2, 60),
    a=st.floats(-100, 100, allow_nan=False),
    b=st.floats(-100, 100, allow_nan=False),
)
def test_trapezoid_exact_for_affine(M, a, b):
    g = make_grid(M)
    one = GridFunction(g, np.ones(M))
    f = GridFunction(g, a + b * g.points)
    assert math.isclose(inner_product(one, f), a + b / 2, abs_tol=1e-12 * (1 + abs(a) + abs(b)))


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(st.integers(2, 30), st.data())
def test_inner_product_symmetric_bilinear(M, data):
    g = make_grid(M)
    arr = st.lists(finite, min_size=M, max_size=M)
    f = np.array(data.draw(arr))
    h = np.array(data.draw(arr))
    k = np.array(data.draw(arr))
    c = data.draw(st.floats(-10, 10, allow_nan=False))
    F, H, Kf = (GridFunction(g, v) for v in (f, h, k))
    assert inner_product(F, H) == inner_product(H, F)
    lhs = inner_product(GridFunction(g, c * f + h), Kf)
    rhs = c * inner_product(F, Kf) + inner_product(H, Kf)
    scale = 1 + float(np.sum(g.weights * (np.abs(c * f) + np.abs(h)) * np.abs(k)))
    assert abs(lhs - rhs) <= 1e-12 * scale


subject_rows = st.lists(
    st.tuples(
        st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=5, unique=True),
        st.floats(-1e6, 1e6, allow_nan=False),
    ),
    min_size=2,
    max_size=6,
)


@given(rows=subject_rows, seed=st.integers(0, 2**32 - 1))
def test_csv_round_trip(tmp_path_factory, rows, seed):
    rng = np.random.default_rng(seed)
    subjects = []
    for i, (times, y) in enumerate(rows):
        t = np.sort(np.array(times))
        subjects.append(Subject(f"id{i}", t, rng.standard_normal(t.size), y))
    ds = SparseFunctionalDataset(tuple(subjects), OutcomeKind.CONTINUOUS)
    p = tmp_path_factory.mktemp("rt") / "ds.csv"
    write_long_csv(ds, p)
    again = load_long_csv(p, "continuous")
    assert again.subjects == ds.subjects
    write_long_csv(again, p)
    assert load_long_csv(p).subjects == ds.subjects


def test_grid_csv_export(tmp_path):
    g = make_grid(4)
    p = tmp_path / "g.csv"
    g.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,w"
    assert len(lines) == 5
