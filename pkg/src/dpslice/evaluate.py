"""Synthetic-data quality metrics.

One-way marginal similarity (KS complement for numerical columns, total
variation complement for categorical), pairwise similarity (categorical
contingency tables, numerical Pearson correlations), and the downstream F1
of a logistic regression trained on synthetic rows and tested on real ones.
All scores live in [0, 1]; higher is better.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp, pearsonr

from .mechanism import ColumnSchema


def ks_complement(real_col, syn_col) -> float:
    """1 - sup distance between the two empirical CDFs."""
    real_col = np.asarray(real_col, dtype=float)
    syn_col = np.asarray(syn_col, dtype=float)
    if real_col.size == 0 or syn_col.size == 0:
        raise ValueError("both columns must be non-empty")
    return 1.0 - float(ks_2samp(real_col, syn_col).statistic)


def tv_complement(real_col, syn_col) -> float:
    """1 - total variation distance between category frequencies."""
    real_col = pd.Series(real_col).astype(str)
    syn_col = pd.Series(syn_col).astype(str)
    if len(real_col) == 0 or len(syn_col) == 0:
        raise ValueError("both columns must be non-empty")
    p = real_col.value_counts(normalize=True)
    q = syn_col.value_counts(normalize=True)
    cats = p.index.union(q.index)
    tv = 0.5 * float(np.abs(p.reindex(cats, fill_value=0.0)
                            - q.reindex(cats, fill_value=0.0)).sum())
    return 1.0 - tv


def _pair_contingency_tv(real: pd.DataFrame, syn: pd.DataFrame, a: str, b: str) -> float:
    p = real.groupby([a, b], observed=True).size() / len(real)
    q = syn.groupby([a, b], observed=True).size() / len(syn)
    cells = p.index.union(q.index)
    return 0.5 * float(np.abs(p.reindex(cells, fill_value=0.0)
                              - q.reindex(cells, fill_value=0.0)).sum())


def contingency_similarity(
    real: pd.DataFrame, syn: pd.DataFrame, categorical_columns
) -> Optional[float]:
    """Mean over categorical column pairs of 1 - TV between normalized
    pairwise contingency tables; None with fewer than two such columns."""
    cols = list(categorical_columns)
    if len(cols) < 2:
        return None
    real = real[cols].astype(str)
    syn = syn[cols].astype(str)
    scores = [1.0 - _pair_contingency_tv(real, syn, a, b)
              for a, b in combinations(cols, 2)]
    return float(np.mean(scores))


def correlation_similarity(
    real: pd.DataFrame, syn: pd.DataFrame, numerical_columns
) -> Optional[float]:
    """Mean over numerical pairs of 1 - |rho_real - rho_syn| / 2 (Pearson);
    None with fewer than two numerical columns. Pairs with a constant column
    are skipped with a warning."""
    cols = list(numerical_columns)
    if len(cols) < 2:
        return None
    scores = []
    for a, b in combinations(cols, 2):
        pairs = {
            frame_name: tuple(np.asarray(frame[c], dtype=float) for c in (a, b))
            for frame_name, frame in (("real", real), ("syn", syn))
        }
        if any(v.std() == 0 for pair in pairs.values() for v in pair):
            warnings.warn(f"skipping pair ({a}, {b}): constant column")
            continue
        rho_r = pearsonr(*pairs["real"]).statistic
        rho_s = pearsonr(*pairs["syn"]).statistic
        scores.append(1.0 - abs(rho_r - rho_s) / 2.0)
    if not scores:
        return None
    return float(np.mean(scores))


def _feature_matrix(table: pd.DataFrame, schema: ColumnSchema, target: str) -> np.ndarray:
    blocks = []
    for spec in schema.columns:
        if spec.name == target:
            continue
        if spec.kind == "numerical":
            blocks.append(np.asarray(table[spec.name], dtype=float)[:, None])
        else:
            vals = table[spec.name].astype(str)
            onehot = np.zeros((len(table), len(spec.categories)))
            index = {c: i for i, c in enumerate(spec.categories)}
            for r, v in enumerate(vals):
                j = index.get(v)
                if j is not None:
                    onehot[r, j] = 1.0
            blocks.append(onehot)
    return np.hstack(blocks)


def logit_f1(
    syn_train: pd.DataFrame,
    real_test: pd.DataFrame,
    schema: ColumnSchema,
    target: str,
    steps: int = 500,
    learning_rate: float = 0.1,
    l2: float = 1e-4,
) -> float:
    """F1 of the positive class for a binary logistic regression trained on
    synthetic rows and evaluated on real rows.

    The classifier is fit by full-batch gradient descent with fixed settings
    so the metric is deterministic; features are standardized using the real
    test statistics.
    """
    spec = next((c for c in schema.columns if c.name == target), None)
    if spec is None or spec.kind != "categorical" or len(spec.categories) != 2:
        raise ValueError(f"target {target!r} must be a binary categorical column")
    positive = spec.categories[1]
    y_train = (syn_train[target].astype(str) == positive).to_numpy(dtype=float)
    y_test = (real_test[target].astype(str) == positive).to_numpy(dtype=float)
    X_train = _feature_matrix(syn_train, schema, target)
    X_test = _feature_matrix(real_test, schema, target)
    mu = X_test.mean(axis=0)
    sd = X_test.std(axis=0)
    sd[sd == 0] = 1.0
    X_train = (X_train - mu) / sd
    X_test = (X_test - mu) / sd

    if y_train.min() == y_train.max():
        warnings.warn("single-class training data; reporting degenerate predictor F1")
        pred = np.full(len(y_test), y_train[0])
    else:
        w = np.zeros(X_train.shape[1])
        b = 0.0
        n = len(y_train)
        for _ in range(steps):
            p = 1.0 / (1.0 + np.exp(-(X_train @ w + b)))
            err = p - y_train
            w -= learning_rate * (X_train.T @ err / n + l2 * w)
            b -= learning_rate * float(err.mean())
        pred = (1.0 / (1.0 + np.exp(-(X_test @ w + b))) >= 0.5).astype(float)

    tp = float(np.sum((pred == 1) & (y_test == 1)))
    fp = float(np.sum((pred == 1) & (y_test == 0)))
    fn = float(np.sum((pred == 0) & (y_test == 1)))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    ks_complement: Optional[float] = None
    tv_complement: Optional[float] = None
    contingency_similarity: Optional[float] = None
    correlation_similarity: Optional[float] = None
    logit_f1: Optional[float] = None
    per_column: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ks_complement": self.ks_complement,
            "tv_complement": self.tv_complement,
            "contingency_similarity": self.contingency_similarity,
            "correlation_similarity": self.correlation_similarity,
            "logit_f1": self.logit_f1,
            "per_column": self.per_column,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def evaluate_tables(
    real: pd.DataFrame,
    syn: pd.DataFrame,
    schema: ColumnSchema,
    target: Optional[str] = None,
) -> MetricsReport:
    """All applicable metrics for a synthetic table against a real one."""
    num_cols = [c.name for c in schema.columns if c.kind == "numerical"]
    cat_cols = [c.name for c in schema.columns if c.kind == "categorical"]
    report = MetricsReport()
    ks_scores = {c: ks_complement(real[c], syn[c]) for c in num_cols}
    tv_scores = {c: tv_complement(real[c], syn[c]) for c in cat_cols}
    if ks_scores:
        report.ks_complement = float(np.mean(list(ks_scores.values())))
    if tv_scores:
        report.tv_complement = float(np.mean(list(tv_scores.values())))
    report.per_column = {"ks_complement": ks_scores, "tv_complement": tv_scores}
    report.contingency_similarity = contingency_similarity(real, syn, cat_cols)
    report.correlation_similarity = correlation_similarity(real, syn, num_cols)
    if target is not None:
        report.logit_f1 = logit_f1(syn, real, schema, target)
    return report
