"""Weighted multiple linear regression with classical coefficient inference.

The solver uses an orthogonal factorization (SVD-backed least squares) after
a greedy rank screen that drops collinear columns in declaration order, so
reported coefficients always belong to an identifiable model. Two-sided
t-tests with df = n - (retained terms) back the significance stars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataError, SchemaError, UnderdeterminedError
from .features import DesignMatrix, TermSpec

RANK_TOL = 1e-10

STAR_LEVELS = (
    (0.0001, "****"),
    (0.001, "***"),
    (0.01, "**"),
    (0.05, "*"),
    (0.1, "+"),
)


def star_code(p: float) -> str:
    for threshold, stars in STAR_LEVELS:
        if p < threshold:
            return stars
    return ""


@dataclass(frozen=True)
class LinearModel:
    """Fitted weighted regression: retained terms, coefficients, and inference."""

    terms: tuple[TermSpec, ...]          # retained non-intercept terms
    dropped: tuple[TermSpec, ...]        # collinear terms removed from the fit
    intercept: bool
    beta: np.ndarray                     # [intercept?] + retained terms
    stderr: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    n: int
    q: int                               # requested non-intercept term count
    df: int
    r2: float
    adj_r2: float
    resid_se: float
    fstat: float
    weighted: bool

    def __post_init__(self):
        for arr in ("beta", "stderr", "tstat", "pvalue"):
            a = np.asarray(getattr(self, arr), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, arr, a)
        k = len(self.terms) + (1 if self.intercept else 0)
        if len(self.beta) != k:
            raise SchemaError("coefficient count does not match term count")

    @property
    def coef(self) -> dict[str, float]:
        out = {}
        i = 0
        if self.intercept:
            out["(Intercept)"] = float(self.beta[0])
            i = 1
        for j, t in enumerate(self.terms):
            out[t.label] = float(self.beta[i + j])
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "terms": [list(t.names) for t in self.terms],
            "dropped": [list(t.names) for t in self.dropped],
            "intercept": self.intercept,
            "beta": [float(v) for v in self.beta],
            "stderr": [float(v) for v in self.stderr],
            "tstat": [float(v) for v in self.tstat],
            "pvalue": [float(v) for v in self.pvalue],
            "n": self.n,
            "q": self.q,
            "df": self.df,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "resid_se": self.resid_se,
            "fstat": self.fstat,
            "weighted": self.weighted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(
            terms=tuple(TermSpec(tuple(names)) for names in d["terms"]),
            dropped=tuple(TermSpec(tuple(names)) for names in d["dropped"]),
            intercept=d["intercept"],
            beta=np.asarray(d["beta"], dtype=float),
            stderr=np.asarray(d["stderr"], dtype=float),
            tstat=np.asarray(d["tstat"], dtype=float),
            pvalue=np.asarray(d["pvalue"], dtype=float),
            n=d["n"], q=d["q"], df=d["df"],
            r2=d["r2"], adj_r2=d["adj_r2"], resid_se=d["resid_se"],
            fstat=d["fstat"], weighted=d["weighted"],
        )


def _screen_collinear(A: np.ndarray) -> list[int]:
    """Indices of columns to retain, scanning left to right.

    A column is dropped when its residual after projection on the already
    retained columns is below RANK_TOL times its own norm, mirroring a rank
    decision at singular values < 1e-10 * largest.
    """
    retained: list[int] = []
    Q: list[np.ndarray] = []
    for j in range(A.shape[1]):
        v = A[:, j].astype(float)
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        r = v.copy()
        for qvec in Q:
            r -= (qvec @ r) * qvec
        # second pass for numerical orthogonality
        for qvec in Q:
            r -= (qvec @ r) * qvec
        nr = np.linalg.norm(r)
        if nr > RANK_TOL * norm0:
            Q.append(r / nr)
            retained.append(j)
    return retained


def fit_wls(X: DesignMatrix, y, w=None) -> LinearModel:
    """Minimize sum of w_i * (y_i - yhat_i)^2 over the design's terms.

    Unit weights when ``w`` is None. Collinear columns are dropped with a
    report (the ``dropped`` field) rather than regularized away, keeping the
    survivors interpretable.
    """
    y = np.asarray(y, dtype=float)
    n, q = X.n, X.q
    if y.shape != (n,):
        raise SchemaError(f"target length {y.shape} does not match n={n}")
    if n <= q + (1 if X.intercept else 0):
        raise UnderdeterminedError(
            f"n={n} samples cannot identify {q} terms plus intercept", n=n, q=q)
    if not np.all(np.isfinite(X.matrix)) or not np.all(np.isfinite(y)):
        raise DataError("design or target contains non-finite cells")
    if w is None:
        w = np.ones(n)
        weighted = False
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (n,):
            raise SchemaError("weight length does not match n")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DataError("weights must be strictly positive and finite")
        weighted = True

    sw = np.sqrt(w)
    full = np.column_stack([np.ones(n), X.matrix]) if X.intercept else X.matrix
    A = full * sw[:, None]
    b = y * sw

    keep = _screen_collinear(A)
    offset = 1 if X.intercept else 0
    retained_terms = tuple(X.terms[j - offset] for j in keep if j >= offset)
    dropped_terms = tuple(t for j, t in enumerate(X.terms) if (j + offset) not in keep)
    has_intercept = X.intercept and 0 in keep
    Ak = A[:, keep]
    k = Ak.shape[1]

    beta, *_ = np.linalg.lstsq(Ak, b, rcond=None)
    resid = b - Ak @ beta
    sse = float(resid @ resid)
    df = n - k
    sigma2 = sse / df if df > 0 else math.nan

    # (X'WX)^-1 via the R factor of the retained columns
    _, R = np.linalg.qr(Ak)
    Rinv = np.linalg.solve(R, np.eye(k))
    xtx_inv = Rinv @ Rinv.T
    stderr = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(stderr > 0, beta / stderr, np.inf * np.sign(beta))
    pvalue = 2.0 * stats.t.sf(np.abs(tstat), df)

    ybar = float(np.sum(w * y) / np.sum(w))
    sst = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    p_terms = len(retained_terms)
    if n - p_terms - 1 > 0:
        adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p_terms - 1)
    else:
        adj_r2 = math.nan
    if p_terms > 0 and sse > 0 and n - p_terms - 1 > 0:
        fstat = ((sst - sse) / p_terms) / (sse / (n - p_terms - 1))
    else:
        fstat = math.inf if sse == 0 and p_terms > 0 else math.nan

    return LinearModel(
        terms=retained_terms, dropped=dropped_terms, intercept=has_intercept,
        beta=beta, stderr=stderr, tstat=tstat, pvalue=pvalue,
        n=n, q=q, df=df, r2=r2, adj_r2=adj_r2,
        resid_se=math.sqrt(sigma2) if df > 0 else math.nan,
        fstat=fstat, weighted=weighted,
    )


def predict_linear(m: LinearModel, X: DesignMatrix) -> np.ndarray:
    """Evaluate yhat = X beta (+ intercept) on a design of the retained terms."""
    if tuple(X.terms) != m.terms:
        raise SchemaError(
            "design terms do not match the model's retained terms",
            expected=[t.label for t in m.terms], got=[t.label for t in X.terms])
    coefs = m.beta[1:] if m.intercept else m.beta
    yhat = X.matrix @ coefs
    if m.intercept:
        yhat = yhat + m.beta[0]
    return yhat


def predict_record(m: LinearModel, record: dict[str, float]) -> float:
    from .features import design_from_record
    return float(predict_linear(m, design_from_record(record, m.terms))[0])


def summarize_model(m: LinearModel) -> dict:
    """Significance table rows plus the fit statistics, JSON-friendly."""
    rows = []
    labels = (["(Intercept)"] if m.intercept else []) + [t.label for t in m.terms]
    for i, label in enumerate(labels):
        p = float(m.pvalue[i])
        rows.append({
            "term": label,
            "coefficient": float(m.beta[i]),
            "stderr": float(m.stderr[i]),
            "t": float(m.tstat[i]),
            "p": p,
            "stars": star_code(p),
        })
    return {
        "rows": rows,
        "dropped": [t.label for t in m.dropped],
        "n": m.n,
        "q": m.q,
        "r2": m.r2,
        "adj_r2": m.adj_r2,
        "fstat": m.fstat,
        "resid_se": m.resid_se,
    }


def format_summary(summary: dict) -> str:
    """Aligned plain-text rendering of a summarize_model result."""
    width = max(len(r["term"]) for r in summary["rows"])
    lines = [f"{'term':<{width}}  {'coef':>14}  {'stderr':>12}  {'t':>9}  {'p':>10}  "]
    for r in summary["rows"]:
        lines.append(
            f"{r['term']:<{width}}  {r['coefficient']:>14.6g}  {r['stderr']:>12.4g}  "
            f"{r['t']:>9.3f}  {r['p']:>10.4g}  {r['stars']}")
    lines.append(f"adjusted R2: {summary['adj_r2']:.6f}   F: {summary['fstat']:.4f}   "
                 f"n={summary['n']} q={summary['q']}")
    if summary["dropped"]:
        lines.append("dropped (collinear): " + ", ".join(summary["dropped"]))
    return "\n".join(lines)
