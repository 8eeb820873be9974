"""Sentence embedding providers.

``remote`` talks to an out-of-process embedding service over HTTP:

    POST <endpoint>  {"model": str, "inputs": [str, ...]}
    200              {"embeddings": [[float, ...], ...], "model": str?}

``hashed-fallback`` is a deterministic local stand-in: signed feature
hashing of unigrams and bigrams under a keyed 64-bit BLAKE2b hash, L2
normalized. It needs no model files and gives identical vectors on every
platform, which keeps pipeline runs reproducible.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np

from .errors import ConfigurationError, ProviderContractError, ProviderError

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"\w+")
TRANSIENT_STATUS = frozenset({408, 429, 500, 502, 503, 504})
DEFAULT_HASH_SEED = 0x6D73_6874_6D5F_6862


@dataclass(frozen=True)
class EmbedderConfig:
    provider: str = "hashed-fallback"
    endpoint: str | None = None
    model: str = "sentence-embedding"
    batch_size: int = 64
    dim: int = 256
    seed: int = DEFAULT_HASH_SEED
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    max_concurrency: int = 1
    token_env: str = "MSHTM_EMBEDDER_TOKEN"
    cache_dir: str | None = None

    def __post_init__(self):
        if self.provider not in ("remote", "hashed-fallback"):
            raise ConfigurationError(f"unknown embedding provider {self.provider!r}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if self.max_concurrency < 1:
            raise ConfigurationError("max_concurrency must be >= 1")
        if self.provider == "remote" and not self.endpoint:
            raise ConfigurationError("the remote provider needs an endpoint URL")


@dataclass(eq=False)
class EmbeddingMatrix:
    values: np.ndarray
    provider_tag: str
    zero_rows: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def take(self, rows: Sequence[int]) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        zero = set(self.zero_rows)
        kept = tuple(i for i, r in enumerate(rows.tolist()) if r in zero)
        return EmbeddingMatrix(self.values[rows], self.provider_tag, kept)


def _check_matrix(values: np.ndarray, n_rows: int) -> None:
    if values.ndim != 2 or values.shape[0] != n_rows:
        raise ProviderContractError(f"expected {n_rows} embedding rows, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ProviderContractError("embedding contains NaN or Inf")


class _CachingMixin:
    cfg: EmbedderConfig

    @property
    def provider_tag(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError

    @property
    def cache_tag(self) -> str:
        return self.provider_tag

    def _cache_path(self, sentences: Sequence[str]) -> Path | None:
        if not self.cfg.cache_dir:
            return None
        h = hashlib.sha256(self.cache_tag.encode("utf-8"))
        for s in sentences:
            h.update(b"\x1e" + s.encode("utf-8", errors="surrogatepass"))
        return Path(self.cfg.cache_dir) / f"{h.hexdigest()}.npy"

    def embed(self, sentences: Sequence[str]) -> EmbeddingMatrix:
        sentences = list(sentences)
        if not sentences:
            raise ConfigurationError("cannot embed an empty sentence list")
        path = self._cache_path(sentences)
        if path is not None and path.exists():
            values = np.load(path)
            _check_matrix(values, len(sentences))
        else:
            values = self._compute(sentences)
            _check_matrix(values, len(sentences))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                np.save(path, values)
        zero = tuple(np.flatnonzero(~values.any(axis=1)).tolist())
        return EmbeddingMatrix(values, self.provider_tag, zero)

    def _compute(self, sentences: list[str]) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class HashedEmbedder(_CachingMixin):
    """Signed feature hashing of lowercase unigrams and bigrams."""

    def __init__(self, cfg: EmbedderConfig | None = None):
        self.cfg = cfg or EmbedderConfig()
        self._key = (self.cfg.seed & 0xFFFF_FFFF_FFFF_FFFF).to_bytes(8, "little")
        self._slots: dict[str, tuple[int, float]] = {}

    @property
    def provider_tag(self) -> str:
        return f"hashed-fallback/v1/dim={self.cfg.dim}/seed={self.cfg.seed:#x}"

    def _slot(self, feature: str) -> tuple[int, float]:
        hit = self._slots.get(feature)
        if hit is None:
            digest = hashlib.blake2b(feature.encode("utf-8", errors="surrogatepass"), digest_size=8, key=self._key).digest()
            value = int.from_bytes(digest, "little")
            hit = (value % self.cfg.dim, -1.0 if value >> 63 else 1.0)
            self._slots[feature] = hit
        return hit

    def features(self, sentence: str) -> list[str]:
        tokens = _TOKEN.findall(sentence.lower())
        return tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]

    def _compute(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.cfg.dim))
        for i, s in enumerate(sentences):
            row = out[i]
            for feat in self.features(s):
                idx, sign = self._slot(feat)
                row[idx] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        return np.divide(out, norms, out=out, where=norms > 0)


class RemoteEmbedder(_CachingMixin):
    """HTTP client for an embedding service.

    Batches of ``batch_size`` are sent with up to ``max_concurrency`` in
    flight; results are reassembled in input order. Transport failures and
    transient statuses are retried with exponential backoff; the call fails
    once a batch exhausts ``max_retries``.
    """

    def __init__(
        self,
        cfg: EmbedderConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep
        self._served_model: str | None = None

    @property
    def provider_tag(self) -> str:
        return f"remote/{self._served_model or self.cfg.model}"

    @property
    def cache_tag(self) -> str:
        # known before the first response, unlike the served model name
        return f"remote/{self.cfg.model}@{self.cfg.endpoint}"

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.cfg.token_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _post_batch(self, batch: list[str]) -> np.ndarray:
        delay = self.cfg.backoff
        last_status: int | None = None
        last_error = "no attempt made"
        for attempt in range(self.cfg.max_retries + 1):
            try:
                resp = self._client.post(
                    self.cfg.endpoint,
                    json={"model": self.cfg.model, "inputs": batch},
                    headers=self._headers(),
                    timeout=self.cfg.timeout,
                )
            except httpx.TransportError as exc:
                last_status, last_error = None, f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp, len(batch))
                last_status, last_error = resp.status_code, f"HTTP {resp.status_code}"
                if resp.status_code not in TRANSIENT_STATUS:
                    raise ProviderError(f"embedding service rejected the request: {last_error}", last_status)
            if attempt < self.cfg.max_retries:
                logger.warning("embedding batch failed (%s); retry %d in %.2fs", last_error, attempt + 1, delay)
                self._sleep(delay)
                delay *= 2
        raise ProviderError(
            f"embedding service unreachable after {self.cfg.max_retries + 1} attempts: {last_error}",
            last_status,
        )

    def _parse(self, resp: httpx.Response, n: int) -> np.ndarray:
        try:
            body = resp.json()
            rows = body["embeddings"]
            values = np.asarray(rows, dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderContractError(f"malformed embedding response: {exc}") from exc
        if isinstance(body.get("model"), str):
            self._served_model = body["model"]
        _check_matrix(values, n)
        return values

    def _compute(self, sentences: list[str]) -> np.ndarray:
        size = self.cfg.batch_size
        batches = [sentences[i : i + size] for i in range(0, len(sentences), size)]
        if self.cfg.max_concurrency == 1 or len(batches) == 1:
            parts = [self._post_batch(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.cfg.max_concurrency) as pool:
                parts = list(pool.map(self._post_batch, batches))
        dims = {p.shape[1] for p in parts}
        if len(dims) != 1:
            raise ProviderContractError(f"embedding dimension changed across batches: {sorted(dims)}")
        return np.vstack(parts)


def make_embedder(cfg: EmbedderConfig, **kwargs):
    if cfg.provider == "remote":
        return RemoteEmbedder(cfg, **kwargs)
    return HashedEmbedder(cfg)


def embed(sentences: Sequence[str], cfg: EmbedderConfig | None = None, **kwargs) -> EmbeddingMatrix:
    return make_embedder(cfg or EmbedderConfig(), **kwargs).embed(sentences)
