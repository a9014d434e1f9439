"""Pluggable sentence and token embedding backends.

The deterministic hashing backend (character trigrams, signed feature
hashing, L2 normalization) is the reference used by the test suite; a
file store replays precomputed vectors and the remote backend attaches
an external encoder over a one-endpoint HTTP protocol.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
import requests

from .errors import DimensionMismatch, MissingEmbedding, RemoteUnavailable

DEFAULT_DIM = 768
SEP = "[SEP]"


class Backend(enum.Enum):
    HASHING = "Hashing"
    FILE_STORE = "FileStore"
    REMOTE = "Remote"


@dataclass(frozen=True)
class EncoderConfig:
    backend: Backend = Backend.HASHING
    dim: int = DEFAULT_DIM
    remote_url: Optional[str] = None
    store_path: Optional[str] = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("embedding dimension must be positive")
        if self.backend is Backend.REMOTE and not self.remote_url:
            raise ValueError("Remote backend requires remote_url")
        if self.backend is Backend.FILE_STORE and not self.store_path:
            raise ValueError("FileStore backend requires store_path")


class SentenceEncoder(Protocol):
    dim: int

    def encode_sentence(self, text: str) -> np.ndarray: ...

    def encode_tokens(self, text: str) -> np.ndarray: ...

    def encode_pair(self, a: str, b: str) -> np.ndarray: ...


def _require_text(text: str) -> str:
    if not text or not text.strip():
        raise ValueError("cannot encode empty text")
    return text


def _stable_hash(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _trigrams(text: str) -> list[str]:
    if len(text) < 3:
        return [text]
    return [text[i : i + 3] for i in range(len(text) - 2)]


class HashingEncoder:
    """Character-trigram signed feature hashing, L2-normalized."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim

    def _hash_features(self, features: list[str]) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for feat in features:
            h = _stable_hash(feat)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[h % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Colliding signs cancelled everything; fall back to one bucket.
            vec[_stable_hash(features[0]) % self.dim] = 1.0
            return vec
        return vec / norm

    def encode_sentence(self, text: str) -> np.ndarray:
        return self._hash_features(_trigrams(_require_text(text)))

    def encode_tokens(self, text: str) -> np.ndarray:
        tokens = _require_text(text).split()
        if not tokens:
            raise ValueError("cannot encode whitespace-only text")
        return np.stack([self._hash_features(_trigrams(tok)) for tok in tokens])

    def encode_pair(self, a: str, b: str) -> np.ndarray:
        # Positional salt keeps the pair encoding order-sensitive.
        features = [f"0\x1f{g}" for g in _trigrams(_require_text(a))]
        features += [f"1\x1f{g}" for g in _trigrams(_require_text(b))]
        return self._hash_features(features)


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class FileStoreEncoder:
    """Replays vectors from a JSON Lines store keyed by sha256 of the text."""

    def __init__(self, store_path: str | Path, dim: int = DEFAULT_DIM):
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        with open(store_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                vec = np.asarray(obj["vector"], dtype=np.float64)
                if vec.shape != (dim,):
                    raise DimensionMismatch(
                        f"stored vector has dim {vec.shape[0]}, expected {dim}"
                    )
                self._vectors[obj["key"]] = vec

    def _lookup(self, text: str) -> np.ndarray:
        key = text_key(text)
        if key not in self._vectors:
            raise MissingEmbedding(f"no stored vector for key {key} ({text[:40]!r})")
        return self._vectors[key].copy()

    def encode_sentence(self, text: str) -> np.ndarray:
        return self._lookup(_require_text(text))

    def encode_tokens(self, text: str) -> np.ndarray:
        tokens = _require_text(text).split()
        return np.stack([self._lookup(tok) for tok in tokens])

    def encode_pair(self, a: str, b: str) -> np.ndarray:
        return self._lookup(f"{_require_text(a)} {SEP} {_require_text(b)}")


def write_store(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    """Write a file-store JSONL mapping text -> vector."""
    with open(path, "w", encoding="utf-8") as fh:
        for text, vec in entries.items():
            fh.write(
                json.dumps({"key": text_key(text), "vector": [float(x) for x in vec]})
                + "\n"
            )


class RemoteEncoder:
    """Talks to a sidecar encoder: POST /encode with texts and a level."""

    def __init__(self, remote_url: str, dim: int = DEFAULT_DIM, timeout: float = 10.0):
        self.dim = dim
        self.url = remote_url.rstrip("/") + "/encode"
        self.timeout = timeout

    def _post(self, texts: list[str], level: str) -> dict:
        try:
            resp = requests.post(
                self.url, json={"texts": texts, "level": level}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise RemoteUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise RemoteUnavailable(f"encoder returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise RemoteUnavailable("encoder returned invalid JSON") from exc

    def _check_dim(self, arr: np.ndarray) -> np.ndarray:
        if arr.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"remote returned dim {arr.shape[-1]}, expected {self.dim}"
            )
        return arr

    def encode_sentence(self, text: str) -> np.ndarray:
        payload = self._post([_require_text(text)], "sentence")
        return self._check_dim(np.asarray(payload["vectors"][0], dtype=np.float64))

    def encode_tokens(self, text: str) -> np.ndarray:
        payload = self._post([_require_text(text)], "token")
        return self._check_dim(np.asarray(payload["matrices"][0], dtype=np.float64))

    def encode_pair(self, a: str, b: str) -> np.ndarray:
        joined = f"{_require_text(a)} {SEP} {_require_text(b)}"
        payload = self._post([joined], "sentence")
        return self._check_dim(np.asarray(payload["vectors"][0], dtype=np.float64))


def build_encoder(config: EncoderConfig) -> SentenceEncoder:
    if config.backend is Backend.HASHING:
        return HashingEncoder(config.dim)
    if config.backend is Backend.FILE_STORE:
        return FileStoreEncoder(config.store_path, config.dim)
    return RemoteEncoder(config.remote_url, config.dim)
