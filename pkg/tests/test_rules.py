import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rrl import rules
from rrl.binarization import BinarizationBounds
from rrl.data import DatasetSchema, Feature
from rrl.logic import LogicalLayerParams
from rrl.model import RRLConfig, RRLModel, discrete_logits, forward

SCHEMA = DatasetSchema((Feature("age", "continuous"), Feature("job", "discrete")), "y",
                       {"job": ("clerk", "manager")}, ("no", "yes"))


def make_model(layers, W, b=None, T=((30.0,),), H=((60.0,),), n_binary=2, schema=SCHEMA):
    """Model from explicit 0/1 selection matrices [(W0, W1), ...]; u0 = [age > T, age < H, job one-hot]."""
    T, H = np.array(T, float), np.array(H, float)
    bounds = BinarizationBounds(T, H, T.shape[1], 0)
    params = [LogicalLayerParams(np.array(W0, float), np.array(W1, float)) for W0, W1 in layers]
    W = np.array(W, float)
    b = np.zeros(W.shape[0]) if b is None else np.array(b, float)
    return RRLModel(RRLConfig([p.n_out for p in params], k=T.shape[1]), bounds, n_binary, params, W, b, schema)


def random_model(rng, structure=(6, 4), density=0.3, m=2, k=2, n_binary=3, M=3):
    T = rng.normal(size=(m, k))
    H = rng.normal(size=(m, k))
    n_in, layers = 2 * k * m + n_binary, []
    for n in structure:
        layers.append(((rng.random((n // 2, n_in)) < density), (rng.random((n // 2, n_in)) < density)))
        n_in = n
    W = rng.normal(size=(M, sum(structure)))
    return make_model(layers, W, rng.normal(size=M), T, H, n_binary, schema=None)


def random_inputs(rng, n=200, m=2, n_binary=3):
    return rng.normal(size=(n, m)), rng.integers(0, 2, (n, n_binary))


# u0 columns: 0 "age > 30", 1 "age < 60", 2 "job == clerk", 3 "job == manager"

def test_conjunction_rule_text():
    model = make_model([([[1, 0, 0, 1]], [[0, 0, 0, 0]])], [[1.0, 0.0], [-1.0, 0.0]])
    rs = rules.extract(model)
    texts = {r.text() for r in rs.rules}
    assert "age > 30 AND job == manager" in texts
    assert rs.rules[0].text() == "age > 30 AND job == manager"
    assert rs.class_names == ["no", "yes"]


def test_dnf_and_cnf():
    layer1 = ([[1, 0, 1, 0], [0, 1, 0, 1]], [[1, 0, 1, 0], [0, 1, 0, 1]])
    # second layer: disj over the two conjunctions, conj over the two disjunctions
    layer2 = ([[0, 0, 1, 1]], [[1, 1, 0, 0]])
    model = make_model([layer1, layer2], np.zeros((2, 6)))
    exprs = rules.node_expressions(rules.full_view(model))
    cnf = rules.canonical(exprs[2][0]).render()
    dnf = rules.canonical(exprs[2][1]).render()
    assert dnf == "(age > 30 AND job == clerk) OR (age < 60 AND job == manager)"
    assert cnf == "(age > 30 OR job == clerk) AND (age < 60 OR job == manager)"


def test_node_expressions_reproduce_activations(rng):
    model = random_model(rng, structure=(8, 6, 4))
    C, B = random_inputs(rng)
    disc = forward(model, C, B, continuous=False).disc
    exprs = rules.node_expressions(rules.full_view(model))
    for layer, acts in zip(exprs[1:], disc):
        for i, e in enumerate(layer):
            assert np.array_equal(e.evaluate(C, B), acts[:, i])
            assert np.array_equal(rules.canonical(e).evaluate(C, B), acts[:, i])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(4,), (6, 4), (4, 4, 2)]), st.floats(0.05, 0.6))
def test_rule_scores_equal_discrete_logits(seed, structure, density):
    rng = np.random.default_rng(seed)
    model = random_model(rng, structure, density)
    # spread weight magnitudes so ordinary floating sums would depend on order
    model.W *= 10.0 ** rng.integers(-6, 6, model.W.shape)
    C, B = random_inputs(rng, 50)
    rs = rules.extract(model)
    assert np.array_equal(rs.decision_function(C, B), discrete_logits(model, C, B))


def test_empty_conjunction_is_dead():
    model = make_model([([[0, 0, 0, 0], [1, 0, 0, 0]], [[0, 0, 1, 0], [0, 0, 0, 0]])], [[1, 2, 3, 4], [0, 0, 0, 0]])
    C = np.array([[10.0], [40.0], [70.0]])
    B = np.array([[1, 0], [0, 1], [1, 0]])
    view = rules.prune_dead_nodes(model, C, B)
    # conj 0 selects nothing (always TRUE), disj 1 selects nothing (always FALSE)
    assert view.live[1].tolist() == [False, True, True, False]
    # the TRUE conjunction's weight is folded into the bias
    assert view.b.tolist() == [1.0, 0.0]
    assert np.array_equal(view.logits(C, B), discrete_logits(model, C, B))


def test_bound_below_minimum_is_dead():
    # T = 5 is below every training age, so "age > 5" is constantly 1
    model = make_model([([[1, 0, 0, 1]], [[0, 1, 1, 0]])], [[1.0, -1.0], [0.0, 0.5]], T=((5.0,),))
    C = np.array([[10.0], [40.0], [70.0]])
    B = np.array([[1, 0], [0, 1], [0, 1]])
    view = rules.prune_dead_nodes(model, C, B)
    assert view.live[0].tolist() == [False, True, True, True]
    rs = rules.extract(view)
    assert sorted(r.text() for r in rs.rules) == ["age < 60 OR job == clerk", "job == manager"]
    assert rs.edge_count == 3
    assert np.array_equal(view.logits(C, B), discrete_logits(model, C, B))


def test_varying_node_with_weight_is_kept():
    model = make_model([([[1, 0, 0, 0]], [[0, 0, 0, 0]])], [[0.7, 0.0], [0.0, 0.0]])
    C = np.array([[10.0], [40.0]])
    view = rules.prune_dead_nodes(model, C, np.array([[1, 0], [0, 1]]))
    assert view.live[1].tolist() == [True, False]


def test_unreachable_node_is_dead():
    # node feeds the head only through weights below the tolerance
    model = make_model([([[1, 0, 0, 0]], [[0, 0, 1, 0]])], [[1e-7, 0.3], [-1e-7, 0.0]])
    C = np.array([[10.0], [40.0]])
    B = np.array([[1, 0], [0, 1]])
    view = rules.prune_dead_nodes(model, C, B)
    assert view.live[1].tolist() == [False, True]
    assert view.live[0].tolist() == [False, False, True, False]


def test_deep_pruning_keeps_feeding_nodes():
    # first-layer nodes with zero head weight stay alive when a live second-layer node uses them
    layer1 = ([[1, 0, 0, 0]], [[0, 1, 1, 0]])
    layer2 = ([[1, 1]], [[0, 0]])
    model = make_model([layer1, layer2], [[0, 0, 1, 0], [0, 0, -1, 0]])
    C = np.array([[10.0], [40.0], [70.0]])
    B = np.array([[1, 0], [0, 1], [0, 1]])
    view = rules.prune_dead_nodes(model, C, B)
    assert view.live[1].tolist() == [True, True] and view.live[2].tolist() == [True, False]
    rs = rules.extract(view)
    assert [r.text() for r in rs.rules] == ["age > 30 AND (age < 60 OR job == clerk)"]
    assert rs.edge_count == 5 and rs.avg_rule_length == 3.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(4,), (6, 4), (8, 6, 4)]), st.floats(0.05, 0.5))
def test_pruning_soundness(seed, structure, density):
    rng = np.random.default_rng(seed)
    model = random_model(rng, structure, density)
    model.W[np.abs(model.W) < 0.5] = 0.0
    C, B = random_inputs(rng, 60)
    view = rules.prune_dead_nodes(model, C, B)
    ref = discrete_logits(model, C, B)
    pruned = view.logits(C, B)
    assert np.allclose(pruned, ref, rtol=0, atol=1e-12)
    assert np.array_equal(pruned.argmax(1), ref.argmax(1)) or np.allclose(pruned, ref, atol=1e-12)
    assert rules.edge_count(view) <= rules.edge_count(model)
    rs = rules.extract(view)
    assert np.allclose(rs.decision_function(C, B), ref, atol=1e-12)


def test_merge_identical_rules():
    model = make_model([([[1, 0, 0, 1], [1, 0, 0, 1]], [[0, 0, 0, 0], [0, 0, 0, 0]])],
                       [[0.3, 0.2, 0, 0], [0, 0, 0, 0]])
    view = rules.prune_dead_nodes(model, np.array([[10.0], [40.0]]), np.array([[0, 1], [0, 1]]))
    merged = rules.eliminate_redundant(rules.extract(view))
    assert len(merged.rules) == 1
    assert merged.rules[0].weights.tolist() == [0.5, 0.0]
    assert merged.rules[0].merged_from == [(1, 0), (1, 1)]


def test_duplicate_leaf_deduplicated():
    leaf = rules.Literal("job == manager", 1, "binary")
    other = rules.Literal("age > 30", 0, "lower", 30.0)
    e = rules.Op("AND", (leaf, other, leaf, rules.Op("AND", (leaf,))))
    c = rules.canonical(e)
    assert c.leaves() == 2 and c.render() == "age > 30 AND job == manager"
    C, B = np.array([[10.0], [40.0], [40.0]]), np.array([[0, 1], [0, 1], [1, 0]])
    assert np.array_equal(c.evaluate(C, B), e.evaluate(C, B))


def test_constants_render():
    assert rules.Op("AND").render() == "TRUE" and rules.Op("OR").render() == "FALSE"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_merged_predicts_like_unmerged(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, (8, 4), density=0.15, n_binary=2, m=1, k=1)
    C, B = random_inputs(rng, 100, m=1, n_binary=2)
    rs = rules.extract(model)
    merged = rules.eliminate_redundant(rs)
    assert len(merged.rules) <= len(rs.rules)
    assert np.array_equal(merged.predict(C, B), rs.predict(C, B))
    assert np.allclose(merged.decision_function(C, B), rs.decision_function(C, B), atol=1e-12)


def test_edge_count_and_length():
    model = make_model([([[1, 1, 0, 1]], [[0, 0, 0, 0]])], [[1.0, 0.0], [0.0, 0.0]])
    C, B = np.array([[10.0], [40.0], [70.0]]), np.array([[0, 1], [0, 1], [1, 0]])
    view = rules.prune_dead_nodes(model, C, B)
    rs = rules.extract(view)
    assert rules.edge_count(view) == 3 and rs.edge_count == 3
    assert rs.avg_rule_length == 3.0


def test_all_dead():
    model = make_model([([[0, 0, 0, 0]], [[0, 0, 0, 0]])], [[1.0, 1.0], [0.0, 0.0]])
    view = rules.prune_dead_nodes(model, np.array([[10.0]]), np.array([[0, 1]]))
    rs = rules.extract(view)
    assert rules.edge_count(view) == 0 and rs.rules == [] and rs.avg_rule_length == 0.0


def test_rules_ordered_by_max_abs_weight(rng):
    rs = rules.extract(random_model(rng))
    keys = [np.abs(r.weights).max() for r in rs.rules]
    assert keys == sorted(keys, reverse=True)


class TestExplain:
    def setup_method(self):
        model = make_model([([[1, 0, 0, 1], [0, 1, 0, 0]], [[0, 0, 1, 0], [1, 0, 1, 0]])],
                           [[1.0, -2.0, 0.5, 0.25], [-1.0, 0.1, 0.0, 4.0]])
        self.model = model
        self.rs = rules.extract(model)

    def test_top_zero_is_header_only(self):
        text = rules.explain(self.model, self.rs, 0)
        assert "edges: " in text and "avg rule length" in text and "class " not in text

    def test_top_larger_than_rule_count(self):
        text = rules.explain(self.model, self.rs, 50)
        assert text.count("[L1 ") == 2 * len(self.rs.rules)

    def test_top_limits_per_class(self):
        text = rules.explain(self.model, self.rs, 1)
        assert text.count("[L1 ") == 2
        assert "+4.0000" in text and "-2.0000" in text

    def test_weight_distribution(self):
        dist = rules.weight_distribution(self.rs)
        assert dist.max() == 1.0 and dist.min() >= 0.0 and len(dist) == 8

    def test_json_export(self):
        d = json.loads(self.rs.to_json())
        assert d["classes"] == ["no", "yes"] and len(d["rules"]) == 4
        assert d["rules"][0]["expr"]["op"] in ("AND", "OR") or "literal" in d["rules"][0]["expr"]
        assert {"edge_count", "avg_rule_length", "linear_nonzeros", "bias"} <= d.keys()
