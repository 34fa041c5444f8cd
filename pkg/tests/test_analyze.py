import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deltatab.analyze import (
    VARIANTS,
    AblationConfig,
    AblationRow,
    MeanOf,
    ablation_csv,
    ablation_table,
    append_to_forest,
    fit_rule_tree,
    get_variant,
    intra_node_distance,
    mean_pairwise_distance,
    predict_variant,
    run_ablation,
    summarize,
    variant_models,
)
from deltatab.cart import TreeParams, fit_cart
from deltatab.data import evaluate, from_arrays
from deltatab.forest import fit_forest
from deltatab.pipeline import PipelineConfig, prepare_splits
from deltatab.refine import RefinerConfig
from deltatab.ruledsl import parse_rule

from conftest import blobs

ONE_LEAF = parse_rule('{"id": "leaf_1"}')
SPLIT0 = parse_rule('{"feature": 0, "threshold": 0.0, "operator": "<=", "left": {"id": "a"}, "right": {"id": "b"}}')


def brute_mean_distance(X):
    pairs = list(itertools.combinations(range(len(X)), 2))
    return sum(np.linalg.norm(X[i] - X[j]) for i, j in pairs) / len(pairs)


@settings(max_examples=100, deadline=None)
@given(X=arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=st.floats(-100, 100)), chunk=st.integers(1, 64))
def test_mean_pairwise_distance_matches_brute_force(X, chunk):
    assert mean_pairwise_distance(X, chunk_elems=chunk) == pytest.approx(brute_mean_distance(X), rel=1e-9, abs=1e-9)


def test_identical_rows_have_zero_distance():
    ds = from_arrays(np.ones((5, 3)), [0, 1, 0, 1, 0])
    assert intra_node_distance(ONE_LEAF, ds) == 0.0


def test_two_rows_distance_two():
    ds = from_arrays(np.array([[0.0, 0.0], [2.0, 0.0]]), [0, 1])
    assert intra_node_distance(ONE_LEAF, ds) == pytest.approx(2.0)


def test_singleton_leaves_are_skipped():
    ds = from_arrays(np.array([[-5.0], [1.0], [4.0]]), [0, 1, 1])
    assert intra_node_distance(SPLIT0, ds) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        intra_node_distance(SPLIT0, from_arrays(np.array([[-1.0], [1.0]]), [0, 1]))


def test_cluster_split_beats_single_leaf():
    ds = blobs(n=200, seed=0)
    assert intra_node_distance(SPLIT0, ds) < intra_node_distance(ONE_LEAF, ds)


def test_cart_partition_is_accepted(clusters_splits):
    tr, _, te = clusters_splits
    t = fit_cart(tr, TreeParams(max_leaf_nodes=4))
    assert 0 < intra_node_distance(t, te) < intra_node_distance(ONE_LEAF, te)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(-1.5, 1.5))
def test_refinement_never_increases_pooled_within_leaf_scatter(seed, t):
    """Splitting a leaf lowers the within-leaf sum of squared deviations, the quantity Euclidean distance tracks."""
    X = np.random.default_rng(seed).normal(size=(60, 3))
    coarse = np.zeros(60, dtype=int)
    fine = (X[:, 1] > t).astype(int)
    ss = lambda leaf: sum(((X[leaf == l] - X[leaf == l].mean(0)) ** 2).sum() for l in np.unique(leaf))
    assert ss(fine) <= ss(coarse) + 1e-9


def test_rule_tree_predicts_leaf_label_distribution():
    X = np.array([[-1.0], [-2.0], [-3.0], [1.0], [2.0]])
    rt = fit_rule_tree(SPLIT0, from_arrays(X, [0, 0, 1, 1, 1]))
    np.testing.assert_allclose(rt.predict(np.array([[-9.0], [9.0]])), [[2 / 3, 1 / 3], [0.0, 1.0]])
    rr = fit_rule_tree(SPLIT0, from_arrays(X, [1.0, 2.0, 3.0, 10.0, 20.0], "regression"))
    np.testing.assert_allclose(rr.predict(np.array([[-9.0], [9.0]])), [2.0, 15.0])


def test_append_to_forest_weights():
    ds = blobs(n=60, seed=1)
    f = fit_forest(ds, K=4, seed=0)
    rt = fit_rule_tree(SPLIT0, ds)
    m = append_to_forest(f, [rt, rt])
    expect = (4 * f.predict(ds.features) + 2 * rt.predict(ds.features)) / 6
    np.testing.assert_allclose(m.predict(ds.features), expect)
    np.testing.assert_allclose(MeanOf((rt,)).predict(ds.features), rt.predict(ds.features))


def test_variant_flags():
    flags = {k: (v.uses_refinement, v.uses_forest_output, v.uses_error_correction) for k, v in VARIANTS.items()}
    assert flags == {
        "A": (False, False, False),
        "B": (False, True, False),
        "C": (True, False, False),
        "D": (True, True, False),
        "E": (True, True, True),
        "F": (False, False, True),
        "full": (True, True, True),
    }
    with pytest.raises(ValueError):
        get_variant("Z")


def small_config(seed=0, n_queries=3):
    return PipelineConfig(K=10, refiner=RefinerConfig(n_queries=n_queries, seed=seed), seed=seed)


def test_variant_a_is_plain_cart(clusters_splits):
    tr, va, te = clusters_splits
    models = variant_models(["A"], tr, va, small_config(), TreeParams())
    ref = fit_cart(tr, TreeParams(), seed=0)
    np.testing.assert_array_equal(predict_variant(models["A"], te.features, te.task), ref.predict(te.features))


def test_all_variants_produce_valid_predictions(clusters_splits, friedman_splits):
    for tr, va, te in (clusters_splits, friedman_splits):
        models = variant_models(list(VARIANTS), tr, va, small_config(), TreeParams())
        assert list(models) == list(VARIANTS)
        for vid, m in models.items():
            p = predict_variant(m, te.features, te.task)
            assert np.all(np.isfinite(p)), vid
            if te.task != "regression":
                np.testing.assert_allclose(p.sum(axis=1), 1.0, err_msg=vid)


def test_full_not_worse_than_forest_on_separable_data(clusters_raw):
    rows = run_ablation(["B", "full"], [("clusters", clusters_raw)], AblationConfig(pipeline=small_config(), seeds=(0, 1)))
    s = summarize(rows)
    assert s[("full", "clusters")][0] >= s[("B", "clusters")][0] - 1e-12


def test_csv_and_table_rendering():
    rows = [
        AblationRow("A", "toy", "accuracy", 0.5, 0),
        AblationRow("A", "toy", "accuracy", 0.7, 1),
        AblationRow("full", "toy", "accuracy", 0.9, 0),
    ]
    text = ablation_csv(rows)
    assert text.splitlines()[0] == "variant,dataset,metric,value,seed"
    assert "A,toy,accuracy,0.500000,0" in text
    assert summarize(rows)[("A", "toy")] == pytest.approx((0.6, 0.1, 2))
    table = ablation_table(rows)
    assert "toy (accuracy)" in table and "0.6000 ± 0.1000" in table
    full_line = [l for l in table.splitlines() if l.startswith("full")][0]
    assert full_line.split()[1:4] == ["x", "x", "x"]


def test_ablation_metric_matches_direct_evaluation(clusters_raw):
    cfg = AblationConfig(pipeline=small_config(), seeds=(3,))
    rows = run_ablation(["A"], [("clusters", clusters_raw)], cfg)
    tr, _, te = prepare_splits(clusters_raw, cfg.ratios, 3)
    direct = evaluate(fit_cart(tr, TreeParams(), seed=3).predict(te.features), te.labels, te.task)
    assert rows[0].value == direct.value and rows[0].metric == direct.name
