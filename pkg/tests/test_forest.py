import numpy as np
import pytest

from deltatab.cart import TreeParams
from deltatab.data import from_arrays
from deltatab.forest import (
    SEPARATOR,
    Forest,
    extract_rule_set,
    fit_forest,
    parse_rule_set,
    predict_forest,
    rank_trees,
)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(150, 4))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return from_arrays(X, y)


def test_prediction_is_mean_of_trees(toy):
    f = fit_forest(toy, K=7, seed=1)
    per_tree = f.predict_trees(toy.features)
    np.testing.assert_allclose(f.predict(toy.features), per_tree.mean(axis=0), rtol=0, atol=1e-15)
    np.testing.assert_allclose(f.predict(toy.features).sum(axis=1), 1.0)


def test_regression_output_shape():
    rng = np.random.default_rng(1)
    ds = from_arrays(rng.normal(size=(80, 3)), rng.normal(size=80), "regression")
    f = fit_forest(ds, K=4)
    assert f.predict(ds.features).shape == (80,)
    assert predict_forest(f, ds.features[0]).shape == ()


def test_seeded_and_independent_of_n_jobs(toy):
    a = fit_forest(toy, K=6, seed=3)
    b = fit_forest(toy, K=6, seed=3, n_jobs=3)
    assert all(np.array_equal(s, t) for s, t in zip(a.subsets, b.subsets))
    np.testing.assert_array_equal(a.predict(toy.features), b.predict(toy.features))
    c = fit_forest(toy, K=6, seed=4)
    assert not np.array_equal(a.subsets[0], c.subsets[0])


def test_no_bootstrap_single_tree_uses_all_rows(toy):
    f = fit_forest(toy, K=1, bootstrap=False, params=TreeParams())
    assert np.array_equal(f.subsets[0], np.arange(toy.n))


def test_rejects_raw_and_bad_k(toy, clusters_raw):
    with pytest.raises(ValueError):
        fit_forest(toy, K=0)
    with pytest.raises(ValueError):
        fit_forest(clusters_raw, K=2)


def test_rule_set_render_and_parse(toy):
    f = fit_forest(toy, K=3, seed=0)
    rs = extract_rule_set(f, order=[2, 0, 1])
    text = rs.render()
    assert text.startswith(SEPARATOR) and text.count("rules:") == 3
    assert text.index("Tree 1 rules:") < text.index("Tree 2 rules:")
    assert parse_rule_set(text) == list(rs.rules)
    assert rs.head(1).render().count("rules:") == 1


def test_rank_trees_orders_by_validation_accuracy(toy):
    f = fit_forest(toy, K=8, seed=2)
    order = rank_trees(f, toy)
    acc = [np.mean(np.argmax(f.trees[i].predict(toy.features), 1) == toy.labels) for i in order]
    assert acc == sorted(acc, reverse=True) and sorted(order) == list(range(8))


def test_dict_roundtrip(toy):
    f = fit_forest(toy, K=3, seed=0)
    g = Forest.from_dict(f.to_dict("abc"))
    np.testing.assert_array_equal(f.predict(toy.features), g.predict(toy.features))
