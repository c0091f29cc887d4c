"""Rule extraction, dead-node pruning, redundancy elimination and complexity metrics.

A discrete model is read as a feature learner plus a linear classifier: every
logical node feeding the linear head is one rule, written as a nested AND/OR
expression over input literals, and the head's column for that node gives the
rule's per-class weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .binarization import BinarizationBounds, literal_text
from .model import RRLModel, binarize_params, exact_head

WEIGHT_TOL = 1e-6


# -- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    """A leaf: either a bound test on a continuous feature or a one-hot column."""
    text: str
    feature: int            # continuous feature index, or one-hot column index
    side: str               # "lower" | "upper" | "binary"
    value: float = 0.0      # bound value (unused for binary literals)

    def key(self) -> str:
        # exact value in the key: two bounds may print the same at 6 digits
        if self.side == "binary":
            return f"b:{self.feature}:{self.text}"
        return f"{self.side}:{self.feature}:{self.value!r}"

    def sort_key(self) -> tuple:
        # bound literals first, feature by feature, then one-hot columns
        if self.side == "binary":
            return (0, 1, self.feature, 0, 0.0)
        return (0, 0, self.feature, self.side == "upper", self.value)

    def evaluate(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.side == "lower":
            return C[:, self.feature] > self.value
        if self.side == "upper":
            return C[:, self.feature] < self.value
        return B[:, self.feature] == 1

    def leaves(self) -> int:
        return 1

    def render(self, top: bool = True) -> str:
        return self.text

    def to_dict(self) -> dict:
        return {"literal": self.text, "feature": self.feature, "side": self.side, "value": self.value}


@dataclass(frozen=True)
class Op:
    """AND/OR over children. An empty AND is TRUE and an empty OR is FALSE."""
    op: str
    children: tuple = ()

    def key(self) -> str:
        return f"{self.op}(" + ",".join(c.key() for c in self.children) + ")"

    def sort_key(self) -> tuple:
        return (1, self.key())

    def evaluate(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        n = len(C)
        if self.op == "AND":
            out = np.ones(n, dtype=bool)
            for c in self.children:
                out &= c.evaluate(C, B)
        else:
            out = np.zeros(n, dtype=bool)
            for c in self.children:
                out |= c.evaluate(C, B)
        return out

    def leaves(self) -> int:
        return sum(c.leaves() for c in self.children)

    def render(self, top: bool = True) -> str:
        if not self.children:
            return "TRUE" if self.op == "AND" else "FALSE"
        s = f" {self.op} ".join(c.render(top=False) for c in self.children)
        return s if top else f"({s})"

    def to_dict(self) -> dict:
        return {"op": self.op, "children": [c.to_dict() for c in self.children]}


Expr = Union[Literal, Op]


def canonical(expr: Expr) -> Expr:
    """Flatten same-operator nesting, drop duplicate children, sort, unwrap singletons."""
    if isinstance(expr, Literal):
        return expr
    kids: dict[str, Expr] = {}
    for c in expr.children:
        c = canonical(c)
        parts = c.children if isinstance(c, Op) and c.op == expr.op else (c,)
        for p in parts:
            kids.setdefault(p.key(), p)
    ordered = tuple(sorted(kids.values(), key=lambda c: c.sort_key()))
    if len(ordered) == 1:
        return ordered[0]
    return Op(expr.op, ordered)


# -- discrete views ----------------------------------------------------------

@dataclass
class DiscreteView:
    """Binary logical weights, liveness masks and the linear head of a discrete model.

    `live[0]` covers the input literals; `live[l]` (l >= 1) covers logical layer l.
    """
    bounds: BinarizationBounds
    n_binary: int
    weights: list[tuple[np.ndarray, np.ndarray]]
    live: list[np.ndarray]
    W: np.ndarray
    b: np.ndarray
    feature_names: list[str]
    binary_names: list[str]
    class_names: list[str]

    @property
    def pruned(self) -> bool:
        return not all(m.all() for m in self.live)

    def layer_outputs(self, C: np.ndarray, B: np.ndarray) -> list[np.ndarray]:
        """Discrete outputs of every layer, dead-source edges removed."""
        from .binarization import binarize
        from .logic import layer_forward_discrete

        u = np.concatenate([binarize(self.bounds, np.atleast_2d(C)), np.asarray(B, dtype=np.uint8)], axis=1)
        outs = [u.astype(bool)]
        for l, (W0, W1) in enumerate(self.weights):
            src = self.live[l]
            outs.append(layer_forward_discrete(W0 & src, W1 & src, outs[-1]))
        return outs

    def logits(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        outs = self.layer_outputs(C, B)
        fired = np.concatenate([o & m for o, m in zip(outs[1:], self.live[1:])], axis=1)
        return exact_head(self.W, self.b, fired)


def _names(model: RRLModel, feature_names: Sequence[str] | None):
    schema = model.schema
    if feature_names is None:
        feature_names = schema.continuous if schema else [f"c{j}" for j in range(model.bounds.m)]
    if schema is not None:
        binary = [f"{f} == {v}" for f, v in schema.binary_names]
        classes = list(schema.classes)
    else:
        binary = [f"b{j}" for j in range(model.n_binary)]
        classes = [str(c) for c in range(model.n_classes)]
    return list(feature_names), binary, classes


def full_view(model: RRLModel, feature_names: Sequence[str] | None = None) -> DiscreteView:
    names, binary, classes = _names(model, feature_names)
    weights = binarize_params(model)
    live = [np.ones(model.input_width, dtype=bool)] + [np.ones(l.n_out, dtype=bool) for l in model.layers]
    return DiscreteView(model.bounds, model.n_binary, weights, live, model.W.copy(), model.b.copy(),
                        names, binary, classes)


def prune_dead_nodes(model: RRLModel, C: np.ndarray, B: np.ndarray,
                     feature_names: Sequence[str] | None = None) -> DiscreteView:
    """Drop nodes that are constant on (C, B), have no edges, or cannot reach the head.

    Constant nodes feeding the head are folded into the bias, so logits on the
    training data are preserved up to rounding. Unreachable nodes only carry
    head weights below WEIGHT_TOL.
    """
    view = full_view(model, feature_names)
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if len(C) == 0:
        raise ValueError("pruning needs at least one training instance")
    outs = view.layer_outputs(C, B)
    # edgeless nodes are constant too (AND of nothing is TRUE, OR of nothing FALSE)
    # and the data already shows that, so constancy over the rows covers both cases
    const = [np.all(o == o[:1], axis=0) for o in outs]
    const_val = [o[0] for o in outs]

    slices = model.head_slices()
    head_nonzero = [np.zeros(outs[0].shape[1], dtype=bool)]
    head_nonzero += [np.abs(model.W[:, s]).max(axis=0) >= WEIGHT_TOL for s in slices]

    L = len(view.weights)
    live = [None] * (L + 1)
    used = np.zeros(view.weights[-1][0].shape[0] * 2, dtype=bool)
    for l in range(L, -1, -1):
        live[l] = ~const[l] & (head_nonzero[l] | used)
        if l > 0:
            W0, W1 = view.weights[l - 1]
            sel = np.concatenate([W0, W1], axis=0)[live[l]]
            used = sel.any(axis=0)

    b = model.b.copy()
    folded = [[] for _ in range(model.n_classes)]
    for l in range(1, L + 1):
        for i in np.flatnonzero(const[l] & const_val[l]):
            for c in range(model.n_classes):
                folded[c].append(model.W[c, slices[l - 1]][i])
    for c in range(model.n_classes):
        b[c] = math.fsum([model.b[c], *folded[c]])

    W = model.W.copy()
    for l in range(1, L + 1):
        cols = np.arange(slices[l - 1].start, slices[l - 1].stop)[~live[l]]
        W[:, cols] = 0.0
    weights = []
    for l, (W0, W1) in enumerate(view.weights, start=1):
        K = W0.shape[0]
        keep0, keep1 = live[l][:K, None], live[l][K:, None]
        src = live[l - 1][None, :]
        weights.append((W0 & keep0 & src, W1 & keep1 & src))
    return DiscreteView(view.bounds, view.n_binary, weights, live, W, b,
                        view.feature_names, view.binary_names, view.class_names)


# -- rule sets ---------------------------------------------------------------

@dataclass
class Rule:
    layer: int
    index: int
    kind: str               # "conj" | "disj"
    expr: Expr
    weights: np.ndarray     # length M
    merged_from: list[tuple[int, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.expr.leaves()

    def text(self) -> str:
        return self.expr.render()

    def to_dict(self) -> dict:
        return {"layer": self.layer, "index": self.index, "kind": self.kind,
                "rule": self.text(), "length": self.length, "weights": self.weights.tolist(),
                "expr": self.expr.to_dict(), "merged_from": [list(m) for m in self.merged_from]}


@dataclass
class RuleSet:
    rules: list[Rule]
    bias: np.ndarray
    class_names: list[str]
    edge_count: int

    def __post_init__(self):
        self.rules.sort(key=lambda r: -float(np.max(np.abs(r.weights))) if r.weights.size else 0.0)

    @property
    def avg_rule_length(self) -> float:
        return avg_rule_length(self)

    @property
    def linear_nonzeros(self) -> int:
        return int(sum(np.count_nonzero(np.abs(r.weights) >= WEIGHT_TOL) for r in self.rules))

    def fired(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        C, B = np.atleast_2d(np.asarray(C, dtype=np.float64)), np.atleast_2d(np.asarray(B))
        if not self.rules:
            return np.zeros((max(C.shape[0], B.shape[0]), 0), dtype=bool)
        return np.stack([r.expr.evaluate(C, B) for r in self.rules], axis=1)

    def decision_function(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Per-class score: bias plus the weights of every rule that fires, summed exactly."""
        W = np.stack([r.weights for r in self.rules], axis=1) if self.rules else np.zeros((len(self.bias), 0))
        return exact_head(W, self.bias, self.fired(C, B))

    def predict(self, C: np.ndarray, B: np.ndarray) -> np.ndarray:
        return self.decision_function(C, B).argmax(axis=1)

    def to_dict(self) -> dict:
        return {"classes": self.class_names, "bias": self.bias.tolist(),
                "edge_count": self.edge_count, "avg_rule_length": self.avg_rule_length,
                "linear_nonzeros": self.linear_nonzeros,
                "rules": [r.to_dict() for r in self.rules]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _literals(view: DiscreteView) -> list[Literal]:
    lits = []
    for i in range(view.bounds.width):
        j, side, v = view.bounds.describe(i)
        lits.append(Literal(literal_text(view.bounds, i, view.feature_names), j, side, v))
    for i, name in enumerate(view.binary_names):
        lits.append(Literal(name, i, "binary"))
    return lits


def node_expressions(view: DiscreteView) -> list[list[Expr]]:
    """Expression for every node of every layer (index 0 = input literals)."""
    exprs: list[list[Expr]] = [_literals(view)]
    for l, (W0, W1) in enumerate(view.weights, start=1):
        prev, src = exprs[-1], view.live[l - 1]
        layer = []
        for op, Wb in (("AND", W0), ("OR", W1)):
            for row in Wb:
                layer.append(Op(op, tuple(prev[j] for j in np.flatnonzero(row & src))))
        exprs.append(layer)
    return exprs


def extract(model: RRLModel | DiscreteView, feature_names: Sequence[str] | None = None,
            canonicalize: bool = True) -> RuleSet:
    """One rule per live head-feeding node.

    From a full model every node becomes a rule (weight-0 ones included), so
    rule scores reproduce the discrete logits exactly. From a pruned view only
    live nodes with a non-negligible head weight are kept.
    """
    view = model if isinstance(model, DiscreteView) else full_view(model, feature_names)
    exprs = node_expressions(view)
    rules, start = [], 0
    for l in range(1, len(exprs)):
        n = len(exprs[l])
        K = n // 2
        for i in range(n):
            w = view.W[:, start + i].copy()
            if not view.live[l][i]:
                continue
            if view.pruned and np.max(np.abs(w)) < WEIGHT_TOL:
                continue
            e = canonical(exprs[l][i]) if canonicalize else exprs[l][i]
            rules.append(Rule(l, i, "conj" if i < K else "disj", e, w))
        start += n
    return RuleSet(rules, view.b.copy(), list(view.class_names), edge_count(view))


def eliminate_redundant(ruleset: RuleSet) -> RuleSet:
    """Merge rules with identical canonical expressions, summing their weights."""
    groups: dict[str, list[Rule]] = {}
    for r in ruleset.rules:
        groups.setdefault(canonical(r.expr).key(), []).append(r)
    merged = []
    for rs in groups.values():
        head = rs[0]
        w = np.array([math.fsum(col) for col in np.stack([r.weights for r in rs], axis=1)])
        merged.append(Rule(head.layer, head.index, head.kind, canonical(head.expr), w,
                           [(r.layer, r.index) for r in rs]))
    return RuleSet(merged, ruleset.bias.copy(), list(ruleset.class_names), ruleset.edge_count)


def edge_count(view: RRLModel | DiscreteView) -> int:
    """Selected logical-layer edges between live nodes; input bounds are not edges."""
    if isinstance(view, RRLModel):
        view = full_view(view)
    total = 0
    for l, (W0, W1) in enumerate(view.weights, start=1):
        K = W0.shape[0]
        src = view.live[l - 1][None, :]
        total += int(np.sum(W0[view.live[l][:K]] & src)) + int(np.sum(W1[view.live[l][K:]] & src))
    return total


def avg_rule_length(ruleset: RuleSet) -> float:
    if not ruleset.rules:
        return 0.0
    return float(np.mean([r.length for r in ruleset.rules]))


def weight_distribution(ruleset: RuleSet) -> np.ndarray:
    """Absolute head weights of all rules, normalized so the largest is 1."""
    if not ruleset.rules:
        return np.zeros(0)
    w = np.abs(np.concatenate([r.weights for r in ruleset.rules]))
    top = w.max()
    return w / top if top > 0 else w


def explain(model: RRLModel | None, ruleset: RuleSet, top_n: int = 10) -> str:
    """Plain-text report: metrics, then the top_n rules of each class by |weight|."""
    lines = ["Rule-based representation: rules feeding the linear layer"]
    if model is not None:
        lines.append(f"structure: {model.config.structure}  bounds per side: {model.bounds.k}")
    lines += [
        f"rules: {len(ruleset.rules)}  edges: {ruleset.edge_count}  "
        f"avg rule length: {ruleset.avg_rule_length:.2f}  linear nonzeros: {ruleset.linear_nonzeros}",
        "bias: " + ", ".join(f"{c}={b:+.4f}" for c, b in zip(ruleset.class_names, ruleset.bias)),
    ]
    if top_n <= 0:
        return "\n".join(lines) + "\n"
    for c, name in enumerate(ruleset.class_names):
        ranked = sorted(ruleset.rules, key=lambda r: -abs(r.weights[c]))[:top_n]
        lines.append("")
        lines.append(f"class {name}: top {len(ranked)} rules by |weight|")
        for r in ranked:
            lines.append(f"  {r.weights[c]:+9.4f}  [L{r.layer} {r.kind} #{r.index}]  {r.text()}")
    return "\n".join(lines) + "\n"
