"""Synthetic corpora for sampler and metric tests."""

import numpy as np

from topiceval.corpus import EncodedCorpus, Vocabulary


def random_corpus(num_docs, vocab_size, seed=0, min_len=30, max_len=60):
    """Uniform random token streams; exercises sampler mechanics only."""
    rs = np.random.RandomState(seed)
    vocab = Vocabulary.from_terms([f"w{i:03d}" for i in range(vocab_size)])
    docs = [
        rs.randint(0, vocab_size, size=rs.randint(min_len, max_len + 1)).astype(np.int32)
        for _ in range(num_docs)
    ]
    return EncodedCorpus(
        vocabulary=vocab,
        documents=docs,
        doc_ids=[f"doc{i}" for i in range(num_docs)],
    )


def planted_corpus(
    num_docs=500,
    num_real_topics=5,
    words_per_topic=10,
    junk_weight=0.3,
    doc_len=60,
    peak_mass=0.9,
    topic_concentration=0.2,
    seed=0,
):
    """Documents drawn from a planted LDA: sharply peaked real topics plus one
    uniform junk topic mixed into every document.

    Real topic t puts ``peak_mass`` on its own block of ``words_per_topic``
    words and spreads the rest uniformly; the junk topic is uniform over the
    vocabulary. Every document mixes ``junk_weight`` of junk with a sparse
    Dirichlet draw over the real topics. Returns (corpus, planted_phi) with
    the junk topic as the last planted row.
    """
    rs = np.random.RandomState(seed)
    vocab_size = num_real_topics * words_per_topic
    phi = np.zeros((num_real_topics + 1, vocab_size))
    for t in range(num_real_topics):
        phi[t, :] = (1.0 - peak_mass) / (vocab_size - words_per_topic)
        block = slice(t * words_per_topic, (t + 1) * words_per_topic)
        phi[t, block] = peak_mass / words_per_topic
    phi[num_real_topics, :] = 1.0 / vocab_size

    vocab = Vocabulary.from_terms([f"w{i:03d}" for i in range(vocab_size)])
    docs = []
    for _ in range(num_docs):
        theta = np.append(
            rs.dirichlet([topic_concentration] * num_real_topics) * (1.0 - junk_weight),
            junk_weight,
        )
        assignments = rs.choice(num_real_topics + 1, size=doc_len, p=theta)
        words = np.empty(doc_len, dtype=np.int32)
        for t in np.unique(assignments):
            mask = assignments == t
            words[mask] = rs.choice(vocab_size, size=int(mask.sum()), p=phi[t])
        docs.append(words)
    corpus = EncodedCorpus(
        vocabulary=vocab,
        documents=docs,
        doc_ids=[f"doc{i}" for i in range(num_docs)],
    )
    return corpus, phi
