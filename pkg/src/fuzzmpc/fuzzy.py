"""Membership functions and the three TSK inference engines.

A linguistic term is stored as a set of *interpretations*: each one is a
triangular primary membership function paired with a secondary weight.  With
``kind="probabilistic"`` the weights are probabilities over interpretations;
with ``kind="fuzzy"`` they are secondary membership degrees.  A type-1 term is
the degenerate case of a single interpretation with weight 1.

All engines share a batched core operating on an ``(N, D)`` input array.  The
scalar entry points (:func:`infer_tsk`, :func:`infer_prob_fuzzy`,
:func:`infer_fuzzy_fuzzy`) wrap it and raise :class:`NoRuleFired` on empty
support; the batched variants return ``nan`` for those rows instead.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

PROBABILISTIC = "probabilistic"
FUZZY = "fuzzy"

DUPLICATE_TOL = 1e-12


class NoRuleFired(ArithmeticError):
    """Every rule has zero firing strength for the given input."""


@dataclass(frozen=True)
class Type1MF:
    """Triangular membership function ``(left, peak, right)``.

    ``left_open`` / ``right_open`` turn the term into a shoulder that holds
    degree 1 beyond the peak on that side.
    """

    left: float
    peak: float
    right: float
    left_open: bool = False
    right_open: bool = False

    def __post_init__(self):
        if not self.left <= self.peak <= self.right:
            raise ValueError(f"need left <= peak <= right, got {self.left}, {self.peak}, {self.right}")

    def __call__(self, x: float) -> float:
        return eval_mf(self, x)

    def shifted(self, delta: float) -> "Type1MF":
        return Type1MF(self.left + delta, self.peak + delta, self.right + delta,
                       self.left_open, self.right_open)

    def scaled(self, factor: float) -> "Type1MF":
        return Type1MF(self.left * factor, self.peak * factor, self.right * factor,
                       self.left_open, self.right_open)


def eval_mf(mf: Type1MF, x: float) -> float:
    return float(_tri(np.asarray(x, dtype=float), mf.left, mf.peak, mf.right,
                      mf.left_open, mf.right_open))


def _tri(x, left, peak, right, left_open, right_open):
    # works elementwise with broadcast parameter arrays
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rise = np.where(peak > left, (x - left) / np.where(peak > left, peak - left, 1.0),
                        (x >= peak).astype(float))
        fall = np.where(right > peak, (right - x) / np.where(right > peak, right - peak, 1.0),
                        (x <= peak).astype(float))
    rise = np.where(left_open, 1.0, rise)
    fall = np.where(right_open, 1.0, fall)
    return np.clip(np.minimum(rise, fall), 0.0, 1.0)


@dataclass(frozen=True)
class Interpretation:
    primary: Type1MF
    secondary: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.secondary <= 1.0:
            raise ValueError(f"secondary weight {self.secondary} outside [0, 1]")


@dataclass(frozen=True)
class Type2MF:
    kind: str
    interpretations: tuple[Interpretation, ...]
    term: str = ""

    def __post_init__(self):
        if self.kind not in (PROBABILISTIC, FUZZY):
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "interpretations", tuple(self.interpretations))
        if not self.interpretations:
            raise ValueError("a term needs at least one interpretation")
        if self.kind == PROBABILISTIC:
            total = sum(i.secondary for i in self.interpretations)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"probabilities of term {self.term!r} sum to {total}, not 1")

    @classmethod
    def crisp(cls, mf: Type1MF, term: str = "", kind: str = PROBABILISTIC) -> "Type2MF":
        """Wrap a type-1 MF as a single-interpretation type-2 term."""
        return cls(kind, (Interpretation(mf, 1.0),), term)

    def degrees(self, x: float) -> list[float]:
        return [eval_mf(i.primary, x) for i in self.interpretations]

    def map_primaries(self, fn) -> "Type2MF":
        return Type2MF(self.kind,
                       tuple(Interpretation(fn(i.primary), i.secondary, i.label)
                             for i in self.interpretations),
                       self.term)


@dataclass(frozen=True)
class FuzzyRule:
    antecedent: tuple[Type2MF, ...]
    consequent: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "antecedent", tuple(self.antecedent))
        object.__setattr__(self, "consequent", tuple(float(c) for c in self.consequent))
        if len(self.consequent) != len(self.antecedent) + 1:
            raise ValueError(f"rule with {len(self.antecedent)} inputs needs "
                             f"{len(self.antecedent) + 1} consequent coefficients")

    def output(self, inputs: Sequence[float]) -> float:
        return self.consequent[0] + float(np.dot(self.consequent[1:], inputs))


def _tnorm(values: np.ndarray, t_norm: str, axis: int) -> np.ndarray:
    if t_norm == "min":
        return values.min(axis=axis)
    if t_norm == "product":
        return values.prod(axis=axis)
    raise ValueError(f"unknown t-norm {t_norm!r}")


def firing_strength(rule: FuzzyRule, interp_choice: Sequence[int], inputs: Sequence[float],
                    t_norm: str = "min") -> float:
    """t-norm of the chosen interpretations' primary degrees."""
    if not len(interp_choice) == len(inputs) == len(rule.antecedent):
        raise ValueError("interpretation choice, inputs and antecedent must have equal arity")
    degrees = [eval_mf(mf.interpretations[i].primary, x)
               for mf, i, x in zip(rule.antecedent, interp_choice, inputs)]
    return float(_tnorm(np.array(degrees), t_norm, axis=0))


@dataclass(frozen=True)
class RuleBase:
    """Rules over a common input space.

    Terms on one input dimension must all have the same number of
    interpretations; interpretation ``i`` of every term on that dimension is
    treated as the same reading of the variable, so a combination is one
    interpretation index per dimension.
    """

    rules: tuple[FuzzyRule, ...]
    t_norm: str = "min"
    input_dims: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ValueError("empty rule base")
        dims = {len(r.antecedent) for r in self.rules}
        if len(dims) != 1:
            raise ValueError(f"rules disagree on arity: {sorted(dims)}")
        object.__setattr__(self, "input_dims", dims.pop())
        kinds = {mf.kind for r in self.rules for mf in r.antecedent
                 if len(mf.interpretations) > 1}
        if len(kinds) > 1:
            raise ValueError("rule base mixes probabilistic and fuzzy terms")
        for d in range(self.input_dims):
            counts = {len(r.antecedent[d].interpretations) for r in self.rules}
            if len(counts) != 1:
                raise ValueError(f"dimension {d}: terms have differing interpretation counts {counts}")
        if self.t_norm not in ("min", "product"):
            raise ValueError(f"unknown t-norm {self.t_norm!r}")

    @property
    def kind(self) -> str:
        for r in self.rules:
            for mf in r.antecedent:
                if len(mf.interpretations) > 1:
                    return mf.kind
        return self.rules[0].antecedent[0].kind

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    @cached_property
    def interp_counts(self) -> tuple[int, ...]:
        return tuple(len(mf.interpretations) for mf in self.rules[0].antecedent)

    @cached_property
    def consequents(self) -> np.ndarray:
        return np.array([r.consequent for r in self.rules])

    @cached_property
    def _tables(self):
        # (R, D, I) parameter tables, padded to the widest dimension
        R, D = self.n_rules, self.input_dims
        width = max(self.interp_counts)
        params = np.zeros((5, R, D, width))
        sec = np.zeros((R, D, width))
        for r, rule in enumerate(self.rules):
            for d, mf in enumerate(rule.antecedent):
                for i, it in enumerate(mf.interpretations):
                    p = it.primary
                    params[:, r, d, i] = (p.left, p.peak, p.right, p.left_open, p.right_open)
                    sec[r, d, i] = it.secondary
        return params, sec

    @cached_property
    def combinations(self) -> np.ndarray:
        """All interpretation-index combinations, shape ``(C, D)``."""
        return np.array(list(itertools.product(*(range(n) for n in self.interp_counts))),
                        dtype=int).reshape(-1, self.input_dims)

    def with_consequents(self, theta) -> "RuleBase":
        theta = np.asarray(theta, dtype=float).reshape(self.n_rules, self.input_dims + 1)
        rules = tuple(FuzzyRule(r.antecedent, tuple(row)) for r, row in zip(self.rules, theta))
        new = RuleBase(rules, self.t_norm)
        # antecedents are unchanged, reuse the compiled tables
        new.__dict__["_tables"] = self._tables
        new.__dict__["combinations"] = self.combinations
        new.__dict__["interp_counts"] = self.interp_counts
        new.__dict__["combo_secondary"] = self.combo_secondary
        if "combo_masses" in self.__dict__:
            new.__dict__["combo_masses"] = self.combo_masses
        return new

    def map_terms(self, fn) -> "RuleBase":
        """Rebuild with every antecedent term passed through ``fn(dim, Type2MF)``."""
        rules = tuple(FuzzyRule(tuple(fn(d, mf) for d, mf in enumerate(r.antecedent)), r.consequent)
                      for r in self.rules)
        return RuleBase(rules, self.t_norm)

    # -- batched primitives ------------------------------------------------
    def primary_degrees(self, X: np.ndarray) -> np.ndarray:
        """Primary degrees, shape ``(N, R, D, I)``."""
        (left, peak, right, lo, ro), _ = self._tables
        x = X[:, None, :, None]
        return _tri(x, left, peak, right, lo.astype(bool), ro.astype(bool))

    def combo_degrees(self, X: np.ndarray):
        """Per-combination primary and secondary degrees of each rule.

        Returns ``(mu1, sec)`` with ``mu1`` of shape ``(N, C, R, D)`` and
        ``sec`` of shape ``(C, R, D)``.
        """
        P = self.primary_degrees(X)
        _, S = self._tables
        combos = self.combinations
        d_idx = np.arange(self.input_dims)
        mu1 = np.moveaxis(P[:, :, d_idx, combos], 2, 1)   # (N, R, C, D) -> (N, C, R, D)
        sec = np.moveaxis(S[:, d_idx, combos], 1, 0)  # (C, R, D)
        return mu1, sec

    def combo_firing(self, X: np.ndarray) -> np.ndarray:
        """Rule firing per interpretation combination, shape ``(N, C, R)``.

        Built as an outer t-norm over dimensions, so the flattened combination
        axis follows :attr:`combinations` order.
        """
        P = self.primary_degrees(X)                  # (N, R, D, I)
        N, R = P.shape[:2]
        op = np.minimum if self.t_norm == "min" else np.multiply
        w = P[:, :, 0, :self.interp_counts[0]]
        for d in range(1, self.input_dims):
            w = op(w[..., None], P[:, :, d, :self.interp_counts[d]].reshape((N, R) + (1,) * d + (-1,)))
        return w.reshape(N, R, -1).transpose(0, 2, 1)

    @cached_property
    def combo_masses(self) -> np.ndarray:
        return combination_masses(self)

    @cached_property
    def combo_secondary(self) -> np.ndarray:
        """Min of the chosen secondary degrees per combination, shape ``(C, R)``."""
        _, S = self._tables
        d_idx = np.arange(self.input_dims)
        return S[:, d_idx, self.combinations].min(axis=2).T

    def rule_outputs(self, X: np.ndarray) -> np.ndarray:
        """Affine consequent values, shape ``(N, R)``."""
        A = self.consequents
        return A[:, 0][None, :] + X @ A[:, 1:].T


def _as_batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _check_arity(rb: RuleBase, X: np.ndarray):
    if X.shape[1] != rb.input_dims:
        raise ValueError(f"rule base takes {rb.input_dims} inputs, got {X.shape[1]}")


def tsk_weights(rb: RuleBase, X) -> np.ndarray:
    """Normalized rule weights of the type-1 engine, shape ``(N, R)``; nan rows when nothing fires."""
    X = _as_batch(X)
    _check_arity(rb, X)
    P = rb.primary_degrees(X)[..., 0]
    w = _tnorm(P, rb.t_norm, axis=2)
    total = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, w / np.where(total > 0, total, 1.0), np.nan)


def prob_fuzzy_weights(rb: RuleBase, X) -> np.ndarray:
    """Expected normalized rule weights over interpretation combinations.

    Because each combination's TSK output is a convex blend of the same rule
    outputs, the expectation over combinations is itself a blend with these
    weights.
    """
    X = _as_batch(X)
    _check_arity(rb, X)
    w = rb.combo_firing(X)                           # (N, C, R)
    # interpretation probabilities are shared by all terms of a dimension
    p = rb.combo_masses                              # (C,)
    total = w.sum(axis=2)                            # (N, C)
    fired = total > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        wn = w / np.where(fired, total, 1.0)[..., None]
    mass = np.where(fired, p[None, :], 0.0)          # skipped combos drop out
    norm = mass.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        mass = np.where(norm > 0, mass / np.where(norm > 0, norm, 1.0), np.nan)
    return np.einsum("nc,ncr->nr", mass, wn)


def combination_masses(rb: RuleBase) -> np.ndarray:
    """Probability of each interpretation combination (independent events)."""
    _, S = rb._tables
    combos = rb.combinations
    per_dim = S[0]                                   # (D, I); identical across rules
    if rb.n_rules > 1 and not np.allclose(S, S[0][None], atol=1e-12):
        raise ValueError("probabilistic terms on one dimension must share interpretation probabilities")
    d_idx = np.arange(rb.input_dims)
    return per_dim[d_idx, combos].prod(axis=1)


def fuzzy_fuzzy_weights(rb: RuleBase, X) -> np.ndarray:
    """Normalized rule weights of the fuzzy-fuzzy engine, shape ``(N, R)``.

    Each rule's antecedent is evaluated for every interpretation combination,
    giving a combined (primary, secondary) pair.  Within a rule, pairs sharing
    a primary degree keep only the largest secondary degree.  The retained
    pairs are type-reduced as a secondary-weighted centroid, which for a TSK
    rule base amounts to rule weights ``sum(secondary * primary)``.
    """
    X = _as_batch(X)
    _check_arity(rb, X)
    m1 = rb.combo_firing(X)                          # (N, C, R)
    m2 = rb.combo_secondary                          # (C, R)
    keep = retained_combinations(m1, m2)
    w = np.where(keep, m1 * m2[None], 0.0).sum(axis=1)   # (N, R)
    total = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, w / np.where(total > 0, total, 1.0), np.nan)


def retained_combinations(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """Mask of combinations surviving the duplicate-primary filter.

    ``m1`` is ``(N, C, R)`` and ``m2`` is ``(C, R)``.  Per sample and rule,
    combinations whose primary degrees tie (chained within
    ``DUPLICATE_TOL``) form a group; only the member with the largest
    secondary degree is kept, the lowest combination index breaking exact ties.
    """
    N, C, R = m1.shape
    B = N * R
    prim = m1.transpose(0, 2, 1).reshape(B, C)
    sec = np.broadcast_to(m2.T[None], (N, R, C)).reshape(B, C)
    order = np.argsort(prim, axis=1, kind="stable")
    sp = np.take_along_axis(prim, order, axis=1)
    ss = np.take_along_axis(sec, order, axis=1)
    starts = np.ones((B, C), dtype=bool)
    starts[:, 1:] = np.diff(sp, axis=1) > DUPLICATE_TOL
    gid = (np.cumsum(starts, axis=1) - 1 + np.arange(B)[:, None] * C).ravel()
    gmax = np.full(B * C, -np.inf)
    np.maximum.at(gmax, gid, ss.ravel())
    cand = ss.ravel() == gmax[gid]
    gmin = np.full(B * C, C)
    np.minimum.at(gmin, gid, np.where(cand, order.ravel(), C))
    keep_sorted = (order.ravel() == gmin[gid]).reshape(B, C)
    keep = np.empty((B, C), dtype=bool)
    np.put_along_axis(keep, order, keep_sorted, axis=1)
    return keep.reshape(N, R, C).transpose(0, 2, 1)


def fuzzy_fuzzy_combinations(rb: RuleBase, x, rule: int = 0):
    """Enumerated ``(combination, mu1, mu2, retained)`` rows for one rule at one input."""
    X = _as_batch(x)
    m1 = rb.combo_firing(X)
    m2 = rb.combo_secondary
    keep = retained_combinations(m1, m2)
    return [(tuple(c), float(m1[0, i, rule]), float(m2[i, rule]), bool(keep[0, i, rule]))
            for i, c in enumerate(rb.combinations)]


_WEIGHTS = {1: tsk_weights, 2: prob_fuzzy_weights, 3: fuzzy_fuzzy_weights}


def rule_weights(rb: RuleBase, X, model_class: int) -> np.ndarray:
    return _WEIGHTS[model_class](rb, X)


def infer_batch(rb: RuleBase, X, model_class: int = 1) -> np.ndarray:
    """Engine output per row of ``X``; ``nan`` where no rule fires."""
    X = _as_batch(X)
    W = rule_weights(rb, X, model_class)
    return (W * rb.rule_outputs(X)).sum(axis=1)


def _scalar(rb: RuleBase, inputs, model_class: int) -> float:
    y = infer_batch(rb, inputs, model_class)[0]
    if not np.isfinite(y):
        raise NoRuleFired(f"no rule fires at {list(np.atleast_1d(inputs))}")
    return float(y)


def infer_tsk(rb: RuleBase, inputs) -> float:
    return _scalar(rb, inputs, 1)


def infer_prob_fuzzy(rb: RuleBase, inputs) -> float:
    return _scalar(rb, inputs, 2)


def infer_fuzzy_fuzzy(rb: RuleBase, inputs) -> float:
    return _scalar(rb, inputs, 3)


def infer(rb: RuleBase, inputs, model_class: int) -> float:
    return _scalar(rb, inputs, model_class)


# -- default term families -------------------------------------------------
PROB_SHIFTS = (-0.1, 0.0, 0.1)
PROB_MASSES = (0.25, 0.5, 0.25)
FUZZY_SECONDARY = (1.0, 0.6)


def shoulder_pair(span: float) -> tuple[Type1MF, Type1MF]:
    """Half-overlapping "low"/"high" shoulders over ``[0, span]`` crossing at ``span / 2``."""
    if span <= 0:
        raise ValueError("term span must be positive")
    return (Type1MF(0.0, 0.0, span, left_open=True),
            Type1MF(0.0, span, span, right_open=True))


def default_terms(model_class: int, span: float) -> tuple[Type2MF, Type2MF]:
    """The ("low", "high") terms of one input for a model class.

    Class 1 uses the bare shoulders.  Class 2 gives each term three
    interpretations shifted by -10 %, 0 and +10 % of the span with masses
    0.25 / 0.5 / 0.25.  Class 3 gives each term a "slightly" reading (the
    base shoulder, secondary 1.0) and a "very" reading pushed 10 % of the
    span toward the extreme (secondary 0.6).
    """
    base = shoulder_pair(span)
    if model_class == 1:
        return tuple(Type2MF.crisp(mf, term) for mf, term in zip(base, ("low", "high")))
    if model_class == 2:
        return tuple(
            Type2MF(PROBABILISTIC,
                    tuple(Interpretation(mf.shifted(s * span), p) for s, p in zip(PROB_SHIFTS, PROB_MASSES)),
                    term)
            for mf, term in zip(base, ("low", "high")))
    if model_class == 3:
        out = []
        for mf, term, sign in zip(base, ("low", "high"), (-1.0, 1.0)):
            out.append(Type2MF(FUZZY, (Interpretation(mf, FUZZY_SECONDARY[0], "slightly"),
                                       Interpretation(mf.shifted(sign * 0.1 * span), FUZZY_SECONDARY[1], "very")),
                               term))
        return tuple(out)
    raise ValueError(f"unknown model class {model_class}")


def any_term(kind: str = PROBABILISTIC) -> Type2MF:
    """A term with degree 1 everywhere, for inputs that enter only the consequent."""
    return Type2MF.crisp(Type1MF(0.0, 0.0, 0.0, left_open=True, right_open=True), "any", kind)


def grid_rule_base(model_class: int, spans: Sequence[float], consequents=None, t_norm: str = "min",
                   passthrough: int = 0) -> RuleBase:
    """One rule per low/high choice on every input (``2**len(spans)`` rules).

    ``passthrough`` extra inputs get an always-true antecedent and act only in
    the consequents.  Consequents default to zero.
    """
    per_dim = [default_terms(model_class, s) for s in spans]
    kind = per_dim[0][0].kind if spans else PROBABILISTIC
    extra = (any_term(kind),) * passthrough
    choices = list(itertools.product((0, 1), repeat=len(spans)))
    D = len(spans) + passthrough
    theta = np.zeros((len(choices), D + 1)) if consequents is None else np.asarray(consequents, float)
    theta = theta.reshape(len(choices), D + 1)
    rules = tuple(FuzzyRule(tuple(per_dim[d][c] for d, c in enumerate(choice)) + extra, tuple(row))
                  for choice, row in zip(choices, theta))
    return RuleBase(rules, t_norm)


def rule_base_spans(rb: RuleBase) -> np.ndarray:
    """Recover the per-input spans of a :func:`grid_rule_base` (0 for passthrough inputs)."""
    spans = []
    for mf in rb.rules[0].antecedent:
        base = mf.interpretations[0].primary if mf.kind == FUZZY else \
            mf.interpretations[len(mf.interpretations) // 2].primary
        spans.append(base.right - base.left if not (base.left_open and base.right_open) else 0.0)
    return np.array(spans)
