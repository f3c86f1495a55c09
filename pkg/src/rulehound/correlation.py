"""Correlation machinery.

Product-moment correlation between input states and targets steers both rule
refinement (which states matter least) and inference (which rule's condition
profile tracks a query best).  Multi-target datasets are reduced to a single
composite code per row before correlating, so "the targets" always means one
column.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .data import Dataset


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation of two equal-length vectors.

    Degenerate inputs (fewer than two points, or a zero-variance side) give
    0.0 rather than NaN: a constant vector carries no linear signal worth
    ranking, and downstream sorts need a total order.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError("pearson_correlation needs two 1-D vectors of equal length")
    n = xv.size
    if n < 2:
        return 0.0
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    r = float(np.dot(dx, dy) / (sx * sy))
    # Rounding can push |r| a hair past 1.
    return max(-1.0, min(1.0, r))


def composite_target_codes(targets: np.ndarray) -> np.ndarray:
    """Collapse an (n, k) target matrix to one integer code per row.

    Distinct rows get distinct codes; codes follow the sorted order of the
    distinct tuples so the mapping is reproducible across runs.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if t.ndim != 2:
        raise ValueError("targets must be 1-D or 2-D")
    distinct = sorted({tuple(row) for row in t})
    code_of = {key: i for i, key in enumerate(distinct)}
    return np.array([code_of[tuple(row)] for row in t], dtype=np.float64)


def states_targets_corr(dataset: Dataset) -> dict[str, float]:
    """Correlation of every input state with the (composite) target code.

    Returns a name -> coefficient mapping over the dataset's input states.
    All entries are finite and lie in [-1, 1].
    """
    codes = composite_target_codes(dataset.targets())
    out: dict[str, float] = {}
    for name in dataset.schema.input_names:
        out[name] = pearson_correlation(dataset.column(name), codes)
    return out


def weighted_rule_correlations(
    corr: Sequence[float],
    arr: np.ndarray,
) -> np.ndarray:
    """Correlate a query row against candidate rows under correlation weights.

    ``arr`` stacks the query values (row 0) over one row per candidate rule,
    one column per shared condition state.  Every column is scaled by that
    state's states-targets coefficient, then row 0 is correlated against each
    candidate row.  Fewer than two columns leaves nothing to correlate over,
    so every candidate scores 0.0.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("arr must stack the query row over at least one candidate row")
    weights = np.asarray(corr, dtype=np.float64)
    if weights.shape != (a.shape[1],):
        raise ValueError("need one correlation weight per column")
    n_rules = a.shape[0] - 1
    if a.shape[1] < 2:
        return np.zeros(n_rules, dtype=np.float64)
    scaled = a * weights[None, :]
    query = scaled[0]
    return np.array(
        [pearson_correlation(query, scaled[i + 1]) for i in range(n_rules)],
        dtype=np.float64,
    )
