"""Word co-occurrence counting and the PMI / NPMI / Coherence topic scores.

Counting is boolean per unit: a term contributes at most once to each unit,
where a unit is either a whole document or a sliding window that advances one
token at a time (trailing windows shorter than the width still count as
units). Probabilities are unit frequencies: p(w) = df(w)/N and
p(wi, wj) = joint_df(wi, wj)/N over N units.

All logarithms are natural. Zero-joint conventions: an NPMI pair with no
co-occurrence contributes exactly -1 (its limit); a PMI pair substitutes
epsilon = 1e-12 for the zero joint count (and clamps a zero document frequency
to 1) so the score stays finite while still punishing the pair hard.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .corpus import EncodedCorpus

UNIT_DOCUMENT = "document"
UNIT_WINDOW = "window"

ZERO_JOINT_EPS = 1e-12

COUNTS_FORMAT = "topiceval-cooccurrence"
COUNTS_VERSION = 1


@dataclass
class CooccurrenceCounts:
    """Unit frequencies and symmetric pair co-frequencies over a corpus."""

    num_units: int
    df: dict
    joint_df: dict  # (min_id, max_id) -> count; self-pairs never counted
    unit_kind: str
    window_width: int | None = None
    restricted_to: frozenset | None = None

    def df_of(self, w: int) -> int:
        return self.df.get(int(w), 0)

    def joint_of(self, a: int, b: int) -> int:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError("self-pairs are not counted")
        return self.joint_df.get((min(a, b), max(a, b)), 0)


def count_units(
    corpus: EncodedCorpus,
    unit_kind: str = UNIT_DOCUMENT,
    window: int = 10,
    restrict_to=None,
) -> CooccurrenceCounts:
    """Count boolean term presence per unit and per unordered term pair.

    ``restrict_to`` limits counting to the given term ids (the usual case:
    the union of all topics' top words), which keeps pair counting cheap on
    large reference corpora.
    """
    if unit_kind not in (UNIT_DOCUMENT, UNIT_WINDOW):
        raise ValueError(f"unknown unit kind {unit_kind!r}")
    if unit_kind == UNIT_WINDOW and window < 2:
        raise ValueError(f"window width must be >= 2, got {window}")
    if corpus.num_docs == 0:
        raise ValueError("corpus is empty")
    restricted = frozenset(int(w) for w in restrict_to) if restrict_to is not None else None

    df: dict = {}
    joint: dict = {}
    num_units = 0
    for doc in corpus.documents:
        if unit_kind == UNIT_DOCUMENT:
            units = [doc]
        else:
            units = [doc[i : i + window] for i in range(len(doc))]
        for unit in units:
            num_units += 1
            present = set(int(w) for w in unit)
            if restricted is not None:
                present &= restricted
            for w in present:
                df[w] = df.get(w, 0) + 1
            for a, b in combinations(sorted(present), 2):
                joint[(a, b)] = joint.get((a, b), 0) + 1
    return CooccurrenceCounts(
        num_units=num_units,
        df=df,
        joint_df=joint,
        unit_kind=unit_kind,
        window_width=window if unit_kind == UNIT_WINDOW else None,
        restricted_to=restricted,
    )


def _check_topic_words(words) -> list:
    words = [int(w) for w in words]
    if len(words) < 2:
        raise ValueError("a topic needs at least 2 words to score")
    if len(set(words)) != len(words):
        raise ValueError("topic word list contains duplicates")
    return words


def pmi_topic(words, counts: CooccurrenceCounts) -> float:
    """Sum of pairwise pointwise mutual information over all word pairs."""
    words = _check_topic_words(words)
    n = counts.num_units
    total = 0.0
    for a, b in combinations(words, 2):
        joint = counts.joint_of(a, b)
        df_a = max(counts.df_of(a), 1)
        df_b = max(counts.df_of(b), 1)
        joint_eff = joint if joint > 0 else ZERO_JOINT_EPS
        total += math.log(joint_eff * n / (df_a * df_b))
    return total


def pair_npmi(joint: int, df_a: int, df_b: int, num_units: int) -> float:
    """NPMI of one pair, with the documented limit conventions."""
    if joint == 0:
        return -1.0
    if joint == num_units:
        return 1.0
    p_joint = joint / num_units
    pmi = math.log(p_joint * num_units * num_units / (df_a * df_b))
    value = pmi / (-math.log(p_joint))
    return min(1.0, max(-1.0, value))


def npmi_topic(words, counts: CooccurrenceCounts) -> float:
    """Sum of pairwise normalized PMI; each pair value lies in [-1, 1]."""
    words = _check_topic_words(words)
    total = 0.0
    for a, b in combinations(words, 2):
        total += pair_npmi(
            counts.joint_of(a, b), counts.df_of(a), counts.df_of(b), counts.num_units
        )
    return total


def coherence_topic(ranked_words, counts: CooccurrenceCounts) -> float:
    """Rank-sensitive smoothed log co-document frequency score.

    ``ranked_words`` must be in descending probability order; counting units
    must be documents. For each later word m and earlier word l the pair
    contributes log((joint(m, l) + 1) / df(l)).
    """
    if counts.unit_kind != UNIT_DOCUMENT:
        raise ValueError("coherence requires document-unit counts")
    words = _check_topic_words(ranked_words)
    for w in words:
        if counts.df_of(w) == 0:
            raise ValueError(f"word id {w} has zero document frequency")
    total = 0.0
    for m in range(1, len(words)):
        for l in range(m):
            joint = counts.joint_of(words[m], words[l])
            total += math.log((joint + 1) / counts.df_of(words[l]))
    return total


def save_counts(counts: CooccurrenceCounts, path, corpus_digest: str) -> None:
    """Cache counts to a JSON file keyed by corpus digest and unit kind."""
    payload = {
        "format": COUNTS_FORMAT,
        "version": COUNTS_VERSION,
        "corpus_digest": corpus_digest,
        "unit_kind": counts.unit_kind,
        "window_width": counts.window_width,
        "restricted_to": sorted(counts.restricted_to) if counts.restricted_to is not None else None,
        "num_units": counts.num_units,
        "df": sorted(counts.df.items()),
        "joint_df": sorted([a, b, c] for (a, b), c in counts.joint_df.items()),
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")), encoding="utf-8")


def load_counts(path, expect_digest: str | None = None) -> CooccurrenceCounts:
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("format") != COUNTS_FORMAT:
        raise ValueError(f"{path}: not a co-occurrence cache file")
    if payload.get("version") != COUNTS_VERSION:
        raise ValueError(f"{path}: unsupported cache version {payload.get('version')}")
    if expect_digest is not None and payload["corpus_digest"] != expect_digest:
        raise ValueError(
            f"{path}: cache was built from corpus {payload['corpus_digest'][:12]}..., "
            f"expected {expect_digest[:12]}..."
        )
    restricted = payload["restricted_to"]
    return CooccurrenceCounts(
        num_units=payload["num_units"],
        df={int(w): int(c) for w, c in payload["df"]},
        joint_df={(int(a), int(b)): int(c) for a, b, c in payload["joint_df"]},
        unit_kind=payload["unit_kind"],
        window_width=payload["window_width"],
        restricted_to=frozenset(int(w) for w in restricted) if restricted is not None else None,
    )
