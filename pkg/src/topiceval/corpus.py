"""Text ingestion and encoding.

Raw documents pass through a fixed pipeline: whitespace tokenization with
punctuation stripping, optional lowercasing, stopword / digit / proper-noun
filtering, and a corpus-wide minimum term count. Surviving tokens are encoded
against a dense integer vocabulary. Proper nouns are detected with a
capitalization heuristic: a token is treated as a proper noun when it is
capitalized in the raw text and does not start a sentence (sentence starts are
document starts or tokens preceded by '.', '!' or '?').
"""

from __future__ import annotations

import hashlib
import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CORPUS_FORMAT = "topiceval-corpus"
CORPUS_VERSION = 1

_SENTENCE_ENDERS = (".", "!", "?")


def default_stopwords() -> frozenset[str]:
    """English stopword list shipped with the package."""
    text = resources.files("topiceval.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stopword list, one word per line; blank lines are ignored."""
    words = Path(path).read_text("utf-8").split()
    return frozenset(w.casefold() for w in words if w)


@dataclass(frozen=True)
class PreprocessConfig:
    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    min_term_count: int = 3
    strip_digits: bool = True
    strip_proper_nouns: bool = True
    lowercase: bool = True

    def __post_init__(self):
        if self.min_term_count < 1:
            raise ValueError(f"min_term_count must be >= 1, got {self.min_term_count}")


def _strip_punctuation(token: str) -> str:
    """Strip leading/trailing Unicode punctuation (category P*)."""
    start = 0
    end = len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str, lowercase: bool = True, strip_digits: bool = False) -> list:
    """Split on Unicode whitespace and strip surrounding punctuation.

    Empty fragments (pure punctuation) vanish; ``strip_digits`` drops tokens
    that consist entirely of digits.
    """
    out = []
    for piece in text.split():
        token = _strip_punctuation(piece)
        if not token:
            continue
        if strip_digits and token.isdigit():
            continue
        out.append(token.lower() if lowercase else token)
    return out


def _raw_tokens(text: str):
    """Yield (stripped_token, sentence_start) pairs for proper-noun detection.

    ``sentence_start`` is True for the first token of the document and for
    tokens whose preceding raw token ends with '.', '!' or '?'.
    """
    sentence_start = True
    for piece in text.split():
        token = _strip_punctuation(piece)
        if token:
            yield token, sentence_start
        sentence_start = piece.endswith(_SENTENCE_ENDERS)


def _filter_document(text: str, config: PreprocessConfig) -> list:
    tokens = []
    for token, sentence_start in _raw_tokens(text):
        if (
            config.strip_proper_nouns
            and not sentence_start
            and token[:1].isupper()
        ):
            continue
        if config.lowercase:
            token = token.lower()
        if token.casefold() in config.stopwords:
            continue
        if config.strip_digits and token.isdigit():
            continue
        tokens.append(token)
    return tokens


@dataclass
class Vocabulary:
    """Bijection between surface terms and dense integer ids in [0, V)."""

    terms: list
    index: dict

    @classmethod
    def from_terms(cls, terms) -> "Vocabulary":
        terms = list(terms)
        index = {t: i for i, t in enumerate(terms)}
        if len(index) != len(terms):
            raise ValueError("vocabulary terms must be unique")
        return cls(terms=terms, index=index)

    def __len__(self) -> int:
        return len(self.terms)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index[t] for t in tokens], dtype=np.int32)

    def decode(self, ids) -> list:
        return [self.terms[int(i)] for i in ids]


@dataclass
class EncodedCorpus:
    """A fixed vocabulary plus documents as token-id sequences."""

    vocabulary: Vocabulary
    documents: list
    doc_ids: list

    def __post_init__(self):
        if len(self.documents) != len(self.doc_ids):
            raise ValueError("documents and doc_ids must have equal length")
        v = len(self.vocabulary)
        for doc_id, doc in zip(self.doc_ids, self.documents):
            if len(doc) == 0:
                raise ValueError(f"document {doc_id!r} is empty")
            if int(np.max(doc)) >= v or int(np.min(doc)) < 0:
                raise ValueError(f"document {doc_id!r} has token ids outside [0, {v})")

    @property
    def num_docs(self) -> int:
        return len(self.documents)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def num_tokens(self) -> int:
        return int(sum(len(d) for d in self.documents))

    def digest(self) -> str:
        """sha256 over the canonical JSON serialization (file-independent)."""
        return hashlib.sha256(self._canonical_bytes()).hexdigest()

    def _canonical_bytes(self) -> bytes:
        payload = {
            "format": CORPUS_FORMAT,
            "version": CORPUS_VERSION,
            "terms": self.vocabulary.terms,
            "doc_ids": self.doc_ids,
            "documents": [[int(t) for t in doc] for doc in self.documents],
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self._canonical_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "EncodedCorpus":
        payload = json.loads(Path(path).read_text("utf-8"))
        if payload.get("format") != CORPUS_FORMAT:
            raise ValueError(f"{path}: not a corpus file")
        if payload.get("version") != CORPUS_VERSION:
            raise ValueError(f"{path}: unsupported corpus version {payload.get('version')}")
        vocab = Vocabulary.from_terms(payload["terms"])
        docs = [np.array(doc, dtype=np.int32) for doc in payload["documents"]]
        return cls(vocabulary=vocab, documents=docs, doc_ids=list(payload["doc_ids"]))


def preprocess(raw_docs, config: PreprocessConfig | None = None) -> EncodedCorpus:
    """Filter and encode raw ``(id, text)`` documents.

    Tokens are filtered by the stopword list, the digit rule and the
    proper-noun heuristic; terms whose corpus-wide count falls below
    ``min_term_count`` are then removed. Documents emptied by filtering are
    dropped with a warning. Raises ValueError if nothing survives.
    """
    if config is None:
        config = PreprocessConfig()
    raw_docs = list(raw_docs)
    if not raw_docs:
        raise ValueError("raw_docs is empty")

    filtered = [(str(doc_id), _filter_document(text, config)) for doc_id, text in raw_docs]

    term_counts = Counter()
    for _, tokens in filtered:
        term_counts.update(tokens)
    kept_terms = {t for t, c in term_counts.items() if c >= config.min_term_count}
    if not kept_terms:
        raise ValueError("no terms survive preprocessing (vocabulary is empty)")

    vocabulary = Vocabulary.from_terms(sorted(kept_terms))
    documents = []
    doc_ids = []
    for doc_id, tokens in filtered:
        kept = [t for t in tokens if t in kept_terms]
        if not kept:
            logger.warning("dropping document %r: no tokens survive preprocessing", doc_id)
            continue
        documents.append(vocabulary.encode(kept))
        doc_ids.append(doc_id)
    if not documents:
        raise ValueError("no documents survive preprocessing")
    return EncodedCorpus(vocabulary=vocabulary, documents=documents, doc_ids=doc_ids)


def read_jsonl(path: str | Path) -> list:
    """Read documents from JSON-lines records {"id": ..., "text": ...}."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if "id" not in record or "text" not in record:
                raise ValueError(f"{path}:{lineno}: record must have 'id' and 'text' fields")
            docs.append((str(record["id"]), str(record["text"])))
    if not docs:
        raise ValueError(f"{path}: no documents")
    return docs


def read_plaintext(path: str | Path) -> list:
    """Read plain text, one document per line; ids are 1-based line numbers."""
    with open(path, encoding="utf-8") as fh:
        docs = [(str(i), line.rstrip("\n")) for i, line in enumerate(fh, start=1)]
    if not docs:
        raise ValueError(f"{path}: no documents")
    return docs
