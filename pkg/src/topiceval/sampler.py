"""Collapsed Gibbs sampling for LDA.

A chain runs ``total_iterations`` full sweeps. After ``burn_in`` sweeps, every
``thin``-th sweep is a collection point: the smoothed per-document topic
estimate theta = (n_dk + alpha) / (n_d + K*alpha) feeds streaming moment
accumulators (Welford's method, so theta samples are never materialized), and
the smoothed topic-word estimate phi = (n_kw + beta) / (n_k + V*beta) is
appended to an on-disk sample store for the two-pass stability metric.

Determinism: identical (corpus, config, seed) produces bit-identical outputs;
the random stream is SplitMix64 (see _gibbs).
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _gibbs
from .corpus import EncodedCorpus

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LdaConfig:
    """Chain hyperparameters and the sample-collection schedule.

    ``alpha=None`` resolves to the conventional 50/K; ``beta`` defaults to
    0.01. The number of collected samples is
    S = (total_iterations - burn_in) // thin and must be at least 2.
    """

    num_topics: int = 100
    alpha: float | None = None
    beta: float = 0.01
    total_iterations: int = 2000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    top_n: int = 10

    def __post_init__(self):
        if self.num_topics < 2:
            raise ValueError(f"num_topics must be >= 2, got {self.num_topics}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.burn_in < 0 or self.burn_in >= self.total_iterations:
            raise ValueError(
                f"burn_in must satisfy 0 <= burn_in < total_iterations "
                f"({self.burn_in} vs {self.total_iterations})"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if self.num_samples < 2:
            raise ValueError(
                f"schedule collects {self.num_samples} samples; at least 2 required"
            )

    @property
    def resolved_alpha(self) -> float:
        return 50.0 / self.num_topics if self.alpha is None else self.alpha

    @property
    def num_samples(self) -> int:
        return (self.total_iterations - self.burn_in) // self.thin


@dataclass
class LdaState:
    """Token-level topic assignments plus the count tables they imply."""

    tokens: np.ndarray      # flat token word ids, document-major
    token_docs: np.ndarray  # document index per token
    doc_ptr: np.ndarray     # D+1 offsets into the flat arrays
    z: np.ndarray           # topic assignment per token
    n_dk: np.ndarray        # D x K document-topic counts
    n_kw: np.ndarray        # K x V topic-word counts
    n_k: np.ndarray         # K topic totals
    n_d: np.ndarray         # D document lengths
    rng_state: np.ndarray   # one-element uint64 SplitMix64 state

    @property
    def num_docs(self) -> int:
        return self.n_dk.shape[0]

    @property
    def num_topics(self) -> int:
        return self.n_dk.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.n_kw.shape[1]

    def token_at(self, d: int, i: int) -> int:
        """Word id of token ``i`` of document ``d``."""
        start = int(self.doc_ptr[d])
        if not 0 <= i < int(self.doc_ptr[d + 1]) - start:
            raise IndexError(f"token position {i} out of range for document {d}")
        return int(self.tokens[start + i])

    def validate(self) -> None:
        """Check count conservation; raises RuntimeError on any violation."""
        if not np.array_equal(self.n_dk.sum(axis=1), self.n_d):
            raise RuntimeError("count conservation violated: n_dk rows != n_d")
        if not np.array_equal(self.n_kw.sum(axis=1), self.n_k):
            raise RuntimeError("count conservation violated: n_kw rows != n_k")
        if int(self.n_k.sum()) != int(self.tokens.shape[0]):
            raise RuntimeError("count conservation violated: sum(n_k) != token count")
        if (self.n_dk < 0).any() or (self.n_kw < 0).any():
            raise RuntimeError("negative count encountered")


def init_state(corpus: EncodedCorpus, config: LdaConfig) -> LdaState:
    """Assign every token a uniform random topic from the seeded generator."""
    if config.num_topics < 2:
        raise ValueError(f"num_topics must be >= 2, got {config.num_topics}")
    num_docs = corpus.num_docs
    num_topics = config.num_topics
    vocab_size = corpus.vocab_size

    tokens = np.concatenate([np.asarray(d, dtype=np.int32) for d in corpus.documents])
    token_docs = np.concatenate(
        [np.full(len(d), i, dtype=np.int32) for i, d in enumerate(corpus.documents)]
    )
    doc_ptr = np.zeros(num_docs + 1, dtype=np.int64)
    np.cumsum([len(d) for d in corpus.documents], out=doc_ptr[1:])

    z = np.zeros(tokens.shape[0], dtype=np.int32)
    n_dk = np.zeros((num_docs, num_topics), dtype=np.int64)
    n_kw = np.zeros((num_topics, vocab_size), dtype=np.int64)
    n_k = np.zeros(num_topics, dtype=np.int64)
    n_d = np.zeros(num_docs, dtype=np.int64)
    rng_state = np.array([config.seed], dtype=np.uint64)

    _gibbs.init_assignments(tokens, token_docs, num_topics, z, n_dk, n_kw, n_k, n_d, rng_state)
    return LdaState(
        tokens=tokens,
        token_docs=token_docs,
        doc_ptr=doc_ptr,
        z=z,
        n_dk=n_dk,
        n_kw=n_kw,
        n_k=n_k,
        n_d=n_d,
        rng_state=rng_state,
    )


def conditional_weights(state: LdaState, d: int, i: int, config: LdaConfig) -> np.ndarray:
    """Unnormalized collapsed conditional over topics for token ``i`` of doc ``d``.

    weight(k) = (n_dk + alpha) * (n_kw + beta) / (n_k + V*beta), with the
    token's own assignment already removed from the counts by the caller.
    """
    w = state.token_at(d, i)
    alpha = config.resolved_alpha
    beta = config.beta
    vbeta = state.vocab_size * beta
    return (state.n_dk[d] + alpha) * (state.n_kw[:, w] + beta) / (state.n_k + vbeta)


class MomentAccumulator:
    """Streaming mean and sample variance over a sequence of equal-shape
    arrays (Welford's update), so per-sample matrices need not be retained."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape, dtype=np.float64)
        self._m2 = np.zeros(shape, dtype=np.float64)

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    def std(self) -> np.ndarray:
        """Sample standard deviation (divisor count-1)."""
        if self.count < 2:
            raise ValueError("standard deviation needs at least 2 samples")
        return np.sqrt(self._m2 / (self.count - 1))


class PhiSampleStore:
    """On-disk sequence of per-sample topic-word distributions.

    File layout (all little-endian): 8-byte magic ``TEVPHI\\x00\\x00``,
    uint32 version, uint64 S, uint64 K, uint64 V, followed by S row-major
    K x V matrices of float64. Appended in collection order.
    """

    MAGIC = b"TEVPHI\x00\x00"
    VERSION = 1
    _HEADER = struct.Struct("<8sIQQQ")

    def __init__(self, path, num_samples: int, num_topics: int, vocab_size: int):
        self.path = Path(path)
        self.num_samples = num_samples
        self.num_topics = num_topics
        self.vocab_size = vocab_size

    @classmethod
    def create(cls, path, num_samples: int, num_topics: int, vocab_size: int) -> "PhiSampleWriter":
        if num_samples < 2:
            raise ValueError(f"store needs at least 2 samples, got {num_samples}")
        return PhiSampleWriter(cls(path, num_samples, num_topics, vocab_size))

    @classmethod
    def open(cls, path) -> "PhiSampleStore":
        path = Path(path)
        size = path.stat().st_size
        if size < cls._HEADER.size:
            raise ValueError(f"{path}: truncated sample store header")
        with open(path, "rb") as fh:
            magic, version, s, k, v = cls._HEADER.unpack(fh.read(cls._HEADER.size))
        if magic != cls.MAGIC:
            raise ValueError(f"{path}: not a phi sample store")
        if version != cls.VERSION:
            raise ValueError(f"{path}: unsupported store version {version}")
        expected = cls._HEADER.size + s * k * v * 8
        if size != expected:
            raise ValueError(
                f"{path}: header declares {s}x{k}x{v} samples "
                f"({expected} bytes) but file has {size} bytes"
            )
        return cls(path, int(s), int(k), int(v))

    def header_bytes(self) -> bytes:
        return self._HEADER.pack(
            self.MAGIC, self.VERSION, self.num_samples, self.num_topics, self.vocab_size
        )

    def iter_samples(self):
        """Yield each stored K x V matrix in collection order."""
        sample_bytes = self.num_topics * self.vocab_size * 8
        with open(self.path, "rb") as fh:
            fh.seek(self._HEADER.size)
            for _ in range(self.num_samples):
                buf = fh.read(sample_bytes)
                yield np.frombuffer(buf, dtype="<f8").reshape(self.num_topics, self.vocab_size)

    def read_sample(self, s: int) -> np.ndarray:
        if not 0 <= s < self.num_samples:
            raise IndexError(f"sample index {s} out of range [0, {self.num_samples})")
        sample_bytes = self.num_topics * self.vocab_size * 8
        with open(self.path, "rb") as fh:
            fh.seek(self._HEADER.size + s * sample_bytes)
            buf = fh.read(sample_bytes)
        return np.frombuffer(buf, dtype="<f8").reshape(self.num_topics, self.vocab_size)


class PhiSampleWriter:
    """Write handle for a PhiSampleStore; appends must total exactly S."""

    def __init__(self, store: PhiSampleStore):
        self.store = store
        self._written = 0
        self._fh = open(store.path, "wb")
        self._fh.write(store.header_bytes())

    def append(self, phi: np.ndarray) -> None:
        expected = (self.store.num_topics, self.store.vocab_size)
        if phi.shape != expected:
            raise ValueError(f"phi sample shape {phi.shape} != {expected}")
        if self._written >= self.store.num_samples:
            raise RuntimeError("store already holds the declared number of samples")
        row_sums = phi.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
            raise ValueError("phi rows must each sum to 1 within 1e-9")
        self._fh.write(np.ascontiguousarray(phi, dtype="<f8").tobytes())
        self._written += 1

    def close(self) -> PhiSampleStore:
        self._fh.close()
        if self._written != self.store.num_samples:
            raise RuntimeError(
                f"store declared {self.store.num_samples} samples "
                f"but {self._written} were appended"
            )
        return self.store

    def abort(self) -> None:
        """Close and remove the partially written file."""
        self._fh.close()
        if self.store.path.exists():
            os.unlink(self.store.path)


@dataclass
class PosteriorSummary:
    """Streaming moments of theta samples: per-(document, topic) mean,
    sample standard deviation (divisor S-1), and coefficient of variation."""

    count_samples: int
    mean: np.ndarray
    std: np.ndarray
    cv: np.ndarray

    MAGIC = b"TEVPOST\x00"
    VERSION = 1
    _HEADER = struct.Struct("<8sIQQQ")

    @property
    def num_docs(self) -> int:
        return self.mean.shape[0]

    @property
    def num_topics(self) -> int:
        return self.mean.shape[1]

    def save(self, path) -> None:
        d, k = self.mean.shape
        with open(path, "wb") as fh:
            fh.write(self._HEADER.pack(self.MAGIC, self.VERSION, self.count_samples, d, k))
            for mat in (self.mean, self.std, self.cv):
                fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PosteriorSummary":
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < cls._HEADER.size:
            raise ValueError(f"{path}: truncated posterior summary")
        magic, version, s, d, k = cls._HEADER.unpack_from(raw)
        if magic != cls.MAGIC:
            raise ValueError(f"{path}: not a posterior summary file")
        if version != cls.VERSION:
            raise ValueError(f"{path}: unsupported summary version {version}")
        expected = cls._HEADER.size + 3 * d * k * 8
        if len(raw) != expected:
            raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
        mats = []
        offset = cls._HEADER.size
        for _ in range(3):
            mats.append(
                np.frombuffer(raw, dtype="<f8", count=d * k, offset=offset)
                .reshape(d, k)
                .copy()
            )
            offset += d * k * 8
        return cls(count_samples=int(s), mean=mats[0], std=mats[1], cv=mats[2])


@dataclass
class TopicReport:
    """Top words for one topic plus a named score per metric."""

    topic_id: int
    top_words: list
    scores: dict = field(default_factory=dict)


def build_topic_reports(top_words, score_vectors) -> list:
    """Zip per-topic word lists with named score vectors into TopicReports.

    ``score_vectors`` are objects with ``metric_name`` and per-topic
    ``scores`` (one entry per topic, in topic order).
    """
    reports = [
        TopicReport(topic_id=k, top_words=list(words)) for k, words in enumerate(top_words)
    ]
    for vector in score_vectors:
        if len(vector.scores) != len(reports):
            raise ValueError(
                f"metric {vector.metric_name!r} scores {len(vector.scores)} topics, "
                f"expected {len(reports)}"
            )
        for report, score in zip(reports, vector.scores):
            report.scores[vector.metric_name] = float(score)
    return reports


@dataclass
class ChainResult:
    summary: PosteriorSummary
    phi_store: PhiSampleStore
    top_words: list            # list of per-topic term lists, by probability
    mean_phi: np.ndarray
    theta_samples: np.ndarray | None = None


def run_chain(
    corpus: EncodedCorpus,
    config: LdaConfig,
    phi_path,
    keep_theta: bool = False,
    validate_counts: bool = False,
) -> ChainResult:
    """Run the full schedule and return streamed moments, the phi store and
    per-topic top words.

    ``keep_theta`` retains every collected theta sample (debug / oracle use
    only: S x D x K floats). ``validate_counts`` checks count conservation
    after every sweep.
    """
    state = init_state(corpus, config)
    alpha = config.resolved_alpha
    beta = config.beta
    num_topics = config.num_topics
    vocab_size = corpus.vocab_size
    num_samples = config.num_samples

    writer = PhiSampleStore.create(phi_path, num_samples, num_topics, vocab_size)
    weight_buf = np.zeros(num_topics, dtype=np.float64)
    n_d_col = state.n_d[:, None].astype(np.float64)
    theta_denom = n_d_col + num_topics * alpha

    moments = MomentAccumulator((state.num_docs, num_topics))
    phi_sum = np.zeros((num_topics, vocab_size), dtype=np.float64)
    retained = [] if keep_theta else None

    try:
        for sweep in range(1, config.total_iterations + 1):
            _gibbs.gibbs_sweep(
                state.tokens, state.token_docs, state.z,
                state.n_dk, state.n_kw, state.n_k,
                alpha, beta, state.rng_state, weight_buf,
            )
            if validate_counts:
                state.validate()
            if sweep <= config.burn_in or (sweep - config.burn_in) % config.thin != 0:
                continue

            theta = (state.n_dk + alpha) / theta_denom
            phi = (state.n_kw + beta) / (state.n_k[:, None] + vocab_size * beta)

            moments.update(theta)
            phi_sum += phi
            writer.append(phi)
            if retained is not None:
                retained.append(theta)
    except BaseException:
        writer.abort()
        raise
    store = writer.close()

    count = moments.count
    mean = moments.mean
    std = moments.std()
    summary = PosteriorSummary(count_samples=count, mean=mean, std=std, cv=std / mean)
    mean_phi = phi_sum / count
    top_n = min(config.top_n, vocab_size)
    top_words = [
        corpus.vocabulary.decode(np.argsort(-row, kind="stable")[:top_n])
        for row in mean_phi
    ]
    theta_samples = np.stack(retained) if retained else None
    logger.info(
        "chain finished: %d sweeps, %d collected samples, D=%d K=%d V=%d",
        config.total_iterations, count, state.num_docs, num_topics, vocab_size,
    )
    return ChainResult(
        summary=summary,
        phi_store=store,
        top_words=top_words,
        mean_phi=mean_phi,
        theta_samples=theta_samples,
    )
