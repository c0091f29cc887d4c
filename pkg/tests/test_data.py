import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import f1_score

from rrl.data import DataError, FoldPlan, load_dataset, macro_f1, stratified_kfold
from rrl.datasets import tictactoe_endgames

from conftest import write_csv


def test_small_file_shapes(tmp_path):
    d, s = write_csv(tmp_path, ["x", "c", "y"],
                     [[0.5, "a", "p"], [1.5, "b", "n"], [2.0, "a", "p"], [-1, "b", "n"]],
                     ["x,continuous", "c,discrete", "y,label"])
    ds = load_dataset(d, s)
    assert ds.C.shape == (4, 1) and ds.B.shape == (4, 2) and ds.Y.shape == (4, 2)
    assert ds.C.dtype == np.float64
    assert ds.B.tolist() == [[1, 0], [0, 1], [1, 0], [0, 1]]
    assert ds.schema.classes == ("n", "p")
    assert ds.c_min.tolist() == [-1.0] and ds.c_max.tolist() == [2.0]


def test_wine_shapes(wine):
    assert wine.C.shape == (178, 13)
    assert wine.B.shape == (178, 0)
    assert wine.Y.shape == (178, 3)
    assert np.bincount(wine.y).tolist() == [59, 71, 48]


def test_tictactoe_shapes(tictactoe):
    assert tictactoe.B.shape == (958, 27)
    assert tictactoe.Y.shape == (958, 2)
    assert tictactoe.C.shape == (958, 0)
    assert dict(zip(tictactoe.schema.classes, np.bincount(tictactoe.y))) == {"negative": 332, "positive": 626}


def test_tictactoe_generator_is_reachable_endgames():
    boards = tictactoe_endgames()
    assert len(boards) == 958
    for board, label in boards:
        nx, no = board.count("x"), board.count("o")
        assert nx - no in (0, 1)
        # x wins exactly on the positive boards
        x_line = any(all(board[i] == "x" for i in line) for line in
                     [(0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6)])
        assert x_line == (label == "positive")


def test_decode_round_trip(tictactoe, tictactoe_paths):
    import csv
    with open(tictactoe_paths[0]) as fh:
        rows = list(csv.DictReader(fh))
    decoded = tictactoe.decode_discrete()
    for name in tictactoe.schema.discrete:
        assert decoded[name] == [r[name] for r in rows]


def test_arrays_are_read_only(wine):
    with pytest.raises(ValueError):
        wine.C[0, 0] = 1.0


@pytest.mark.parametrize("rows, needle", [
    ([["abc", "a", "p"]], "non-numeric"),
    ([["inf", "a", "p"]], "non-finite"),
    ([["1", "", "p"]], "missing value"),
    ([["1", "a"]], "expected 3 fields"),
])
def test_load_errors_name_row_and_column(tmp_path, rows, needle):
    d, s = write_csv(tmp_path, ["x", "c", "y"], [["0", "a", "n"]] + rows,
                     ["x,continuous", "c,discrete", "y,label"])
    with pytest.raises(DataError, match=needle) as exc:
        load_dataset(d, s)
    assert ":3" in str(exc.value)


def test_unknown_column_and_missing_schema(tmp_path):
    d, s = write_csv(tmp_path, ["x", "z", "y"], [[1, 2, "a"]], ["x,continuous", "y,label"])
    with pytest.raises(DataError, match="unknown column 'z'"):
        load_dataset(d, s)
    with pytest.raises(DataError, match="nope.schema"):
        load_dataset(d, tmp_path / "nope.schema")


def test_reference_schema_rejects_unseen_category(tmp_path):
    d, s = write_csv(tmp_path, ["c", "y"], [["a", "p"], ["b", "n"]], ["c,discrete", "y,label"])
    ref = load_dataset(d, s).schema
    d2, s2 = write_csv(tmp_path, ["c", "y"], [["a", "p"], ["zz", "n"]], ["c,discrete", "y,label"], name="e")
    with pytest.raises(DataError, match="unseen category 'zz'"):
        load_dataset(d2, s2, reference=ref)
    d3, s3 = write_csv(tmp_path, ["c", "y"], [["b", "p"]], ["c,discrete", "y,label"], name="f")
    assert load_dataset(d3, s3, reference=ref).schema.fingerprint() == ref.fingerprint()


# -- folds ---------------------------------------------------------------

def test_ten_balanced_five_folds():
    y = np.array([0] * 5 + [1] * 5)
    plan = stratified_kfold(y, 5, seed=3)
    for train, test in plan.folds:
        assert sorted(y[test].tolist()) == [0, 1]
        assert len(train) == 8


def test_tictactoe_fold_sizes(tictactoe):
    # 958 = 5 * 191 + 3
    sizes = sorted(len(te) for _, te in stratified_kfold(tictactoe, 5, 0).folds)
    assert sizes == [191, 191, 192, 192, 192]


def test_fold_plan_deterministic_and_json_round_trip(tictactoe):
    a = stratified_kfold(tictactoe, 5, 11)
    b = stratified_kfold(tictactoe, 5, 11)
    for (tr1, te1), (tr2, te2) in zip(a.folds, b.folds):
        assert np.array_equal(te1, te2) and np.array_equal(tr1, tr2)
    c = FoldPlan.from_json(a.to_json())
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a.folds, c.folds))


def test_fold_errors():
    with pytest.raises(ValueError, match="fewer than k"):
        stratified_kfold(np.array([0, 0, 0, 1, 1, 1, 1, 1]), 5, 0)
    with pytest.raises(ValueError):
        stratified_kfold(np.array([0, 1] * 5), 1, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=12, max_size=80), st.integers(2, 4), st.integers(0, 10**6))
def test_folds_partition_and_stratify(labels, k, seed):
    y = np.array(labels)
    if np.bincount(y)[np.unique(y)].min() < k:
        return
    plan = stratified_kfold(y, k, seed)
    tests = [te for _, te in plan.folds]
    assert np.array_equal(np.sort(np.concatenate(tests)), np.arange(len(y)))
    sizes = [len(t) for t in tests]
    assert max(sizes) - min(sizes) <= 1
    for c in np.unique(y):
        per = [int(np.sum(y[t] == c)) for t in tests]
        assert max(per) - min(per) <= 1
    for train, test in plan.folds:
        assert not set(train) & set(test)


def test_different_seeds_differ(tictactoe):
    a = stratified_kfold(tictactoe, 5, 0).folds[0][1]
    b = stratified_kfold(tictactoe, 5, 1).folds[0][1]
    assert not np.array_equal(a, b)


# -- metrics ---------------------------------------------------------------

def test_macro_f1_examples():
    assert macro_f1([0, 1, 1, 0], [0, 1, 1, 0], 2) == 1.0
    assert macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2) == pytest.approx(11 / 15, abs=1e-15)
    assert macro_f1([1, 1, 1, 1], [0, 0, 0, 0], 2) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5).flatmap(lambda M: st.tuples(
    st.just(M), st.lists(st.tuples(st.integers(0, M - 1), st.integers(0, M - 1)), min_size=1, max_size=50))),
    st.randoms())
def test_macro_f1_matches_sklearn_and_is_permutation_invariant(case, rnd):
    M, pairs = case
    pred, truth = map(np.array, zip(*pairs))
    ours = macro_f1(pred, truth, M)
    ref = f1_score(truth, pred, labels=list(range(M)), average="macro", zero_division=0)
    assert ours == pytest.approx(ref, abs=1e-12)
    perm = list(range(len(pred)))
    rnd.shuffle(perm)
    assert macro_f1(pred[perm], truth[perm], M) == pytest.approx(ours, abs=1e-15)
