"""Nonnegative matrix factorization with multiplicative updates.

Factorizes a terms x documents matrix ``X ~ W H`` by minimizing

    ||X - W H||_F^2 + lam_W ||W||_F^2 + lam_H ||H||_F^2,
    lam_W = alpha_W * n,  lam_H = alpha_H * n   (n = number of columns of X)

with Lee-Seung multiplicative updates. The L2 terms enter the update
denominators, which keeps every step monotone in the objective and every
entry nonnegative without projection.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .assigner import threshold_value
from .errors import ConfigurationError, DegenerateInputError, DimensionError
from .vectorizer import TermDocMatrix, Vocabulary

EPS = 1e-12
MODEL_FORMAT = "mshtm-nmf"
MODEL_VERSION = 1
_DENSE_SVD_LIMIT = 25_000_000


@dataclass(frozen=True)
class NmfConfig:
    rank: int
    max_iter: int = 400
    tol: float = 1e-4
    alpha_W: float = 0.0
    alpha_H: float = 0.0
    seed: int = 0
    init: str = "nndsvd"

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigurationError("rank must be a positive integer")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be a positive integer")
        if not self.tol > 0:
            raise ConfigurationError("tol must be > 0")
        if self.alpha_W < 0 or self.alpha_H < 0:
            raise ConfigurationError("regularization coefficients must be >= 0")
        if self.init not in ("nndsvd", "random"):
            raise ConfigurationError(f"unknown init {self.init!r}")


@dataclass(eq=False)
class NmfModel:
    W: np.ndarray
    H: np.ndarray
    config: NmfConfig
    objective_trace: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    @property
    def n_iter(self) -> int:
        return len(self.objective_trace) - 1


def _as_matrix(X):
    if isinstance(X, TermDocMatrix):
        X = X.values
    if sp.issparse(X):
        X = sp.csc_matrix(X, dtype=np.float64)
        if X.nnz and X.data.min() < 0:
            raise DegenerateInputError("input matrix has negative entries")
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {X.shape}")
    if X.size and X.min() < 0:
        raise DegenerateInputError("input matrix has negative entries")
    return X


def _sq_norm(X) -> float:
    if sp.issparse(X):
        return float(X.data @ X.data)
    return float(np.einsum("ij,ij->", X, X))


def _fit_error(X, W, H, x_sq: float, WtX: np.ndarray | None = None) -> float:
    """||X - WH||_F^2; direct for dense input, Gram expansion for sparse."""
    if not sp.issparse(X):
        R = X - W @ H
        return float(np.einsum("ij,ij->", R, R))
    if WtX is None:
        WtX = np.asarray((X.T @ W).T)
    cross = float(np.einsum("ij,ij->", WtX, H))
    gram = float(np.einsum("ij,ij->", W.T @ W, H @ H.T))
    return max(x_sq - 2.0 * cross + gram, 0.0)


def _objective(X, W, H, x_sq, lam_W, lam_H, WtX=None) -> float:
    value = _fit_error(X, W, H, x_sq, WtX)
    if lam_W:
        value += lam_W * float(np.einsum("ij,ij->", W, W))
    if lam_H:
        value += lam_H * float(np.einsum("ij,ij->", H, H))
    return value


def _svd(X, k: int):
    d, n = X.shape
    if not sp.issparse(X) or d * n <= _DENSE_SVD_LIMIT:
        dense = X.toarray() if sp.issparse(X) else X
        U, S, Vt = scipy.linalg.svd(dense, full_matrices=False, lapack_driver="gesdd")
        return U[:, :k], S[:k], Vt[:k]
    v0 = np.full(min(d, n), 1.0 / np.sqrt(min(d, n)))
    U, S, Vt = scipy.sparse.linalg.svds(X, k=k, v0=v0)
    order = np.argsort(S)[::-1]
    return U[:, order], S[order], Vt[order]


def nndsvd_init(X, rank: int, fill_average: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative double SVD initialization (Boutsidis & Gallopoulos).

    With ``fill_average`` the zeros left by the sign split are replaced by
    the mean of X, so multiplicative updates can still move them.
    """
    U, S, Vt = _svd(X, rank)
    d, n = X.shape
    W = np.zeros((d, rank))
    H = np.zeros((rank, n))
    W[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    H[0, :] = np.sqrt(S[0]) * np.abs(Vt[0, :])
    for j in range(1, rank):
        x, y = U[:, j], Vt[j, :]
        xp, yp = np.maximum(x, 0), np.maximum(y, 0)
        xn, yn = np.abs(np.minimum(x, 0)), np.abs(np.minimum(y, 0))
        xpn, ypn = np.linalg.norm(xp), np.linalg.norm(yp)
        xnn, ynn = np.linalg.norm(xn), np.linalg.norm(yn)
        mp, mn = xpn * ypn, xnn * ynn
        if mp >= mn:
            u, v, sigma = xp / max(xpn, EPS), yp / max(ypn, EPS), mp
        else:
            u, v, sigma = xn / max(xnn, EPS), yn / max(ynn, EPS), mn
        scale = np.sqrt(S[j] * sigma)
        W[:, j] = scale * u
        H[j, :] = scale * v
    W[W < 1e-6 * W.max(initial=0)] = 0.0
    H[H < 1e-6 * H.max(initial=0)] = 0.0
    if fill_average:
        avg = (X.sum() / X.size) if not sp.issparse(X) else (X.sum() / (d * n))
        W[W == 0] = avg
        H[H == 0] = avg
    return W, H


def random_init(X, rank: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    d, n = X.shape
    avg = float(X.sum()) / (d * n)
    scale = np.sqrt(avg / rank)
    rng = np.random.default_rng(seed)
    W = scale * rng.uniform(size=(d, rank))
    H = scale * rng.uniform(size=(rank, n))
    return W, H


def factorize(X, cfg: NmfConfig) -> NmfModel:
    """Fit ``X ~ W H``; stops at ``max_iter`` or when the relative
    objective decrease falls below ``tol``."""
    X = _as_matrix(X)
    d, n = X.shape
    if cfg.rank > min(d, n):
        raise DimensionError(f"rank {cfg.rank} exceeds min(d, n) = {min(d, n)}")
    x_sq = _sq_norm(X)
    if x_sq == 0:
        raise DegenerateInputError("cannot factorize an all-zero matrix")

    if cfg.init == "nndsvd":
        W, H = nndsvd_init(X, cfg.rank)
    else:
        W, H = random_init(X, cfg.rank, cfg.seed)
    lam_W = cfg.alpha_W * n
    lam_H = cfg.alpha_H * n

    trace = [_objective(X, W, H, x_sq, lam_W, lam_H)]
    for _ in range(cfg.max_iter):
        XHt = np.asarray(X @ H.T)
        denom = W @ (H @ H.T)
        if lam_W:
            denom += lam_W * W
        W *= XHt / np.maximum(denom, EPS)

        WtX = np.asarray((X.T @ W).T)
        denom = (W.T @ W) @ H
        if lam_H:
            denom += lam_H * H
        H *= WtX / np.maximum(denom, EPS)

        trace.append(_objective(X, W, H, x_sq, lam_W, lam_H, WtX))
        prev, cur = trace[-2], trace[-1]
        if cur <= 0 or (prev - cur) / max(prev, EPS) < cfg.tol:
            break
    return NmfModel(W=W, H=H, config=cfg, objective_trace=np.asarray(trace))


def transform(W: np.ndarray, X_new, cfg: NmfConfig, return_trace: bool = False):
    """Encode new columns against a fixed dictionary ``W``.

    Runs only the H half of the multiplicative update. The starting coding
    is the constant ``sqrt(mean(X_new) / r)``; all-zero input columns stay
    exactly zero.
    """
    W = np.asarray(W, dtype=np.float64)
    X = _as_matrix(X_new)
    if W.ndim != 2 or W.shape[0] != X.shape[0]:
        raise DimensionError(
            f"dictionary has {W.shape[0] if W.ndim == 2 else '?'} rows but input has {X.shape[0]}"
        )
    if W.size and W.min() < 0:
        raise DegenerateInputError("dictionary has negative entries")
    r = W.shape[1]
    d, n = X.shape
    H = np.zeros((r, n))
    trace: list[float] = []
    total = float(X.sum())
    if n == 0 or total == 0:
        return (H, np.zeros(1)) if return_trace else H

    col_mass = np.asarray(X.sum(axis=0)).ravel()
    H[:, col_mass > 0] = np.sqrt(total / (d * n) / r)
    x_sq = _sq_norm(X)
    lam_H = cfg.alpha_H * n
    WtX = np.asarray((X.T @ W).T)
    WtW = W.T @ W
    trace.append(_objective(X, W, H, x_sq, 0.0, lam_H, WtX))
    for _ in range(cfg.max_iter):
        denom = WtW @ H
        if lam_H:
            denom += lam_H * H
        H *= WtX / np.maximum(denom, EPS)
        trace.append(_objective(X, W, H, x_sq, 0.0, lam_H, WtX))
        prev, cur = trace[-2], trace[-1]
        if cur <= 0 or (prev - cur) / max(prev, EPS) < cfg.tol:
            break
    if return_trace:
        return H, np.asarray(trace)
    return H


def coding_objective(W, X, H, alpha_H: float = 0.0) -> float:
    """Objective of a coding for fixed W (fit error plus the H penalty)."""
    X = _as_matrix(X)
    return _objective(X, np.asarray(W), np.asarray(H), _sq_norm(X), 0.0, alpha_H * X.shape[1])


ThresholdRule = Callable[[np.ndarray], np.ndarray]


def mean_std_rule(k: float = 1.0) -> ThresholdRule:
    """Inclusive ``coefficient >= mean + k * std`` over the row."""

    def rule(row: np.ndarray) -> np.ndarray:
        return row >= threshold_value(row, k)

    return rule


def positive_rule() -> ThresholdRule:
    return lambda row: row > 0


@dataclass(eq=False)
class SplitBlock:
    topic: int
    matrix: object
    columns: np.ndarray


def hierarchical_split(X, H: np.ndarray, rule: ThresholdRule) -> list[SplitBlock]:
    """Per topic, the columns of X whose coding passes ``rule``.

    A column may land in several blocks; ``columns`` maps back to the
    original column indices.
    """
    H = np.asarray(H)
    Xm = X.values if isinstance(X, TermDocMatrix) else X
    if H.shape[1] != Xm.shape[1]:
        raise DimensionError(f"H has {H.shape[1]} columns but X has {Xm.shape[1]}")
    blocks = []
    for i in range(H.shape[0]):
        cols = np.flatnonzero(rule(H[i]))
        if isinstance(X, TermDocMatrix):
            sub = X.column_subset(cols)
        else:
            sub = Xm[:, cols]
        blocks.append(SplitBlock(topic=i, matrix=sub, columns=cols))
    return blocks


def top_keywords(W: np.ndarray, vocab: Vocabulary | Sequence[str], n_words: int) -> list[list[str]]:
    """Per dictionary column, the ``n_words`` heaviest terms.

    Descending weight; equal weights fall back to lexicographic term order.
    """
    terms = list(vocab.terms if isinstance(vocab, Vocabulary) else vocab)
    W = np.asarray(W)
    if n_words > len(terms):
        raise DimensionError(f"n_words={n_words} exceeds vocabulary size {len(terms)}")
    lex_rank = np.empty(len(terms), dtype=np.int64)
    lex_rank[np.argsort(np.array(terms, dtype=object), kind="stable")] = np.arange(len(terms))
    out = []
    for j in range(W.shape[1]):
        order = np.lexsort((lex_rank, -W[:, j]))
        out.append([terms[i] for i in order[:n_words]])
    return out


def save_model(model: NmfModel, path: str | Path, vocab: Vocabulary | None = None) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "vocabulary_sha256": vocab.digest() if vocab is not None else None,
        "terms": list(vocab.terms) if vocab is not None else None,
        "W": model.W.tolist(),
        "H": model.H.tolist(),
        "objective_trace": model.objective_trace.tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: str | Path) -> tuple[NmfModel, dict]:
    """Returns the model and the container metadata (terms, vocab hash)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise ConfigurationError(f"{path} is not an {MODEL_FORMAT} container")
    if payload.get("version") != MODEL_VERSION:
        raise ConfigurationError(f"unsupported model version {payload.get('version')}")
    model = NmfModel(
        W=np.asarray(payload["W"], dtype=np.float64),
        H=np.asarray(payload["H"], dtype=np.float64),
        config=NmfConfig(**payload["config"]),
        objective_trace=np.asarray(payload["objective_trace"], dtype=np.float64),
    )
    meta = {"terms": payload.get("terms"), "vocabulary_sha256": payload.get("vocabulary_sha256")}
    return model, meta
