import json

import numpy as np
import pytest

from topiceval.corpus import (
    EncodedCorpus,
    PreprocessConfig,
    Vocabulary,
    default_stopwords,
    load_stopwords,
    preprocess,
    read_jsonl,
    read_plaintext,
    tokenize,
)

NO_STOPWORDS = frozenset()


def cfg(**kwargs):
    kwargs.setdefault("stopwords", NO_STOPWORDS)
    return PreprocessConfig(**kwargs)


class TestTokenize:
    def test_empty_input(self):
        assert tokenize("") == []

    def test_strips_punctuation_and_lowercases(self):
        assert tokenize("Banks, banks!") == ["banks", "banks"]

    def test_digit_rule_keeps_hyphenated(self):
        assert tokenize("debt-fund 2016", strip_digits=True) == ["debt-fund"]

    def test_digits_kept_by_default(self):
        assert tokenize("debt-fund 2016") == ["debt-fund", "2016"]

    def test_interior_punctuation_survives(self):
        assert tokenize("don't (really)") == ["don't", "really"]

    def test_no_lowercase(self):
        assert tokenize("Big Apple", lowercase=False) == ["Big", "Apple"]

    def test_pure_punctuation_vanishes(self):
        assert tokenize("--- ... !?") == []


class TestPreprocess:
    def test_min_count_keeps_frequent_terms(self):
        docs = [(i, "apple apple") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=3))
        assert corpus.vocabulary.terms == ["apple"]
        assert corpus.num_docs == 3
        assert all(len(d) == 2 for d in corpus.documents)

    def test_min_count_drops_rare_terms(self):
        docs = [("a", "apple banana"), ("b", "apple banana"), ("c", "apple")]
        corpus = preprocess(docs, cfg(min_term_count=3))
        assert corpus.vocabulary.terms == ["apple"]

    def test_stopword_document_dropped_with_warning(self, caplog):
        config = cfg(stopwords=frozenset({"the", "a"}), min_term_count=1)
        with caplog.at_level("WARNING"):
            corpus = preprocess([("x", "the a the"), ("y", "apple apple")], config)
        assert corpus.doc_ids == ["y"]
        assert any("dropping document" in m for m in caplog.messages)

    def test_proper_noun_mid_sentence_removed(self):
        docs = [(i, "we visited Paris today") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=1))
        assert "paris" not in corpus.vocabulary.terms
        assert "visited" in corpus.vocabulary.terms

    def test_sentence_start_capital_kept(self):
        docs = [(i, "nice view. Paris has one") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=1))
        assert "paris" in corpus.vocabulary.terms

    def test_document_start_capital_kept(self):
        docs = [(i, "Paris has museums") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=1))
        assert "paris" in corpus.vocabulary.terms

    def test_proper_nouns_kept_when_disabled(self):
        docs = [(i, "we visited Paris today") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=1, strip_proper_nouns=False))
        assert "paris" in corpus.vocabulary.terms

    def test_digit_tokens_removed(self):
        docs = [(i, "year 2016 was fine") for i in range(3)]
        corpus = preprocess(docs, cfg(min_term_count=1))
        assert "2016" not in corpus.vocabulary.terms

    def test_stopwords_match_casefolded(self):
        config = cfg(stopwords=frozenset({"the"}), min_term_count=1, lowercase=False)
        docs = [(0, "The THE the keep. Keep keep")]
        corpus = preprocess(docs, config)
        assert set(corpus.vocabulary.terms) == {"keep", "Keep"}

    def test_empty_inputs_error(self):
        with pytest.raises(ValueError):
            preprocess([], cfg())
        with pytest.raises(ValueError):
            preprocess([("a", "...")], cfg(min_term_count=1))

    def test_all_terms_below_min_count_error(self):
        with pytest.raises(ValueError, match="vocabulary is empty"):
            preprocess([("a", "unique words only here")], cfg(min_term_count=2))

    def test_min_count_invariant(self):
        docs = [
            ("a", "red red blue green green green"),
            ("b", "red blue blue yellow"),
            ("c", "green yellow purple"),
        ]
        corpus = preprocess(docs, cfg(min_term_count=3))
        counts = {t: 0 for t in corpus.vocabulary.terms}
        for doc in corpus.documents:
            for term in corpus.vocabulary.decode(doc):
                counts[term] += 1
        assert all(c >= 3 for c in counts.values())

    def test_encode_decode_roundtrip(self):
        docs = [("a", "red blue red"), ("b", "blue red blue")]
        corpus = preprocess(docs, cfg(min_term_count=1))
        for doc in corpus.documents:
            decoded = corpus.vocabulary.decode(doc)
            assert np.array_equal(corpus.vocabulary.encode(decoded), doc)
        first = corpus.documents[corpus.doc_ids.index("a")]
        assert corpus.vocabulary.decode(first) == ["red", "blue", "red"]

    def test_idempotence(self):
        docs = [
            ("a", "The banks, banks and Paris funds. Money money money!"),
            ("b", "Money funds hit banks. 2016 was loud."),
            ("c", "Funds grew; money and banks did well."),
        ]
        config = PreprocessConfig(min_term_count=2)
        first = preprocess(docs, config)
        redone = [
            (doc_id, " ".join(first.vocabulary.decode(doc)))
            for doc_id, doc in zip(first.doc_ids, first.documents)
        ]
        second = preprocess(redone, config)
        assert second.vocabulary.terms == first.vocabulary.terms
        assert second.doc_ids == first.doc_ids
        for d1, d2 in zip(first.documents, second.documents):
            assert np.array_equal(d1, d2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PreprocessConfig(min_term_count=0)


class TestVocabulary:
    def test_bijection(self):
        vocab = Vocabulary.from_terms(["a", "b", "c"])
        assert [vocab.index[t] for t in vocab.terms] == [0, 1, 2]
        assert vocab.decode(vocab.encode(["c", "a"])) == ["c", "a"]

    def test_duplicate_terms_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.from_terms(["a", "a"])


class TestEncodedCorpus:
    def test_validation(self):
        vocab = Vocabulary.from_terms(["a", "b"])
        with pytest.raises(ValueError, match="empty"):
            EncodedCorpus(vocab, [np.array([], dtype=np.int32)], ["d0"])
        with pytest.raises(ValueError, match="outside"):
            EncodedCorpus(vocab, [np.array([5], dtype=np.int32)], ["d0"])
        with pytest.raises(ValueError, match="equal length"):
            EncodedCorpus(vocab, [np.array([0], dtype=np.int32)], ["d0", "d1"])

    def test_save_load_roundtrip(self, tmp_path):
        corpus = preprocess(
            [("a", "red blue red"), ("b", "blue red blue")], cfg(min_term_count=1)
        )
        path = tmp_path / "corpus.json"
        corpus.save(path)
        loaded = EncodedCorpus.load(path)
        assert loaded.vocabulary.terms == corpus.vocabulary.terms
        assert loaded.doc_ids == corpus.doc_ids
        for d1, d2 in zip(loaded.documents, corpus.documents):
            assert np.array_equal(d1, d2)
        assert loaded.digest() == corpus.digest()

    def test_digest_changes_with_content(self):
        c1 = preprocess([("a", "red blue red blue")], cfg(min_term_count=1))
        c2 = preprocess([("a", "red blue red red")], cfg(min_term_count=1))
        assert c1.digest() != c2.digest()

    def test_load_rejects_other_files(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(ValueError, match="not a corpus file"):
            EncodedCorpus.load(path)


class TestReaders:
    def test_read_jsonl(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text('{"id": "x", "text": "hello there"}\n{"id": "y", "text": "bye"}\n')
        assert read_jsonl(path) == [("x", "hello there"), ("y", "bye")]

    def test_read_jsonl_errors(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text("not json\n")
        with pytest.raises(ValueError, match="invalid JSON"):
            read_jsonl(path)
        path.write_text('{"id": "x"}\n')
        with pytest.raises(ValueError, match="'id' and 'text'"):
            read_jsonl(path)

    def test_read_plaintext(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("first doc\nsecond doc\n")
        assert read_plaintext(path) == [("1", "first doc"), ("2", "second doc")]

    def test_stopword_assets(self, tmp_path):
        words = default_stopwords()
        assert "the" in words and "and" in words
        path = tmp_path / "sw.txt"
        path.write_text("Foo\nbar\n\n")
        assert load_stopwords(path) == frozenset({"foo", "bar"})
