"""Tests for tokenization, sentence splitting, IDF, n-gram models, and embeddings."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langassess.text import (
    Document,
    build_idf,
    cosine,
    embed,
    ngram_logprob,
    split_sentences,
    tokenize,
    train_embeddings,
    train_ngram,
)

words = st.text(alphabet="abcde", min_size=1, max_size=6)
sentences_st = st.lists(words, min_size=1, max_size=12).map(" ".join)
corpora = st.lists(sentences_st, min_size=1, max_size=8)


class TestTokenize:
    def test_basic(self):
        ts = tokenize("The cat sat.")
        assert ts.tokens == ("the", "cat", "sat")
        assert ts.spans == ((0, 3), (4, 7), (8, 11))

    def test_contractions_stay_whole(self):
        assert tokenize("don't stop").tokens == ("don't", "stop")

    def test_punctuation_excluded(self):
        assert tokenize("Hello, world! (yes)").tokens == ("hello", "world", "yes")

    def test_empty(self):
        assert len(tokenize("")) == 0
        assert len(tokenize("  ... !! ")) == 0

    @given(st.text(max_size=80))
    def test_spans_recover_tokens(self, text):
        ts = tokenize(text)
        for token, (start, end) in zip(ts.tokens, ts.spans):
            assert text[start:end].lower() == token

    @given(st.text(max_size=80))
    def test_spans_strictly_increasing(self, text):
        ts = tokenize(text)
        for (s1, e1), (s2, e2) in zip(ts.spans, ts.spans[1:]):
            assert e1 <= s2 and s1 < e1 and s2 < e2


class TestSplitSentences:
    def test_two_sentences(self):
        text = "The cat sat. The dog ran."
        spans = split_sentences(text)
        assert [text[a:b] for a, b in spans] == ["The cat sat.", "The dog ran."]

    def test_abbreviation_does_not_break(self):
        text = "Dr. Smith left. He ran."
        spans = split_sentences(text)
        assert [text[a:b] for a, b in spans] == ["Dr. Smith left.", "He ran."]

    def test_question_and_exclamation(self):
        text = "Really? Yes! Fine."
        spans = split_sentences(text)
        assert [text[a:b] for a, b in spans] == ["Really?", "Yes!", "Fine."]

    def test_lowercase_continuation_not_a_break(self):
        text = "It was 3. years ago."
        assert len(split_sentences(text)) == 1

    def test_lenient_mode_breaks_on_lowercase(self):
        text = "it rained. we stayed in."
        assert len(split_sentences(text)) == 1
        assert len(split_sentences(text, require_uppercase=False)) == 2

    def test_single_letter_word_breaks(self):
        text = "A. B."
        spans = split_sentences(text)
        assert [text[a:b] for a, b in spans] == ["A.", "B."]

    def test_empty_text(self):
        assert split_sentences("") == ()
        assert split_sentences("   ") == ()

    @given(st.text(max_size=120))
    def test_spans_cover_all_nonspace_text(self, text):
        spans = split_sentences(text)
        starts = [a for a, _ in spans]
        assert starts == sorted(starts)
        covered = set()
        for a, b in spans:
            assert 0 <= a < b <= len(text)
            for i in range(a, b):
                assert i not in covered
                covered.add(i)
        for i, ch in enumerate(text):
            if not ch.isspace():
                assert i in covered


class TestIdf:
    def test_frozen_values(self):
        # N=3 docs: df(a)=3, df(b)=1 -> idf(a)=ln(4/4)+1, idf(b)=ln(4/2)+1.
        table = build_idf(["a b", "a c", "a"])
        assert table.weight("a") == pytest.approx(1.0)
        assert table.weight("b") == pytest.approx(1.0 + math.log(2.0))
        assert table.weight("zzz") == pytest.approx(1.0 + math.log(4.0))

    def test_unseen_equals_default(self):
        table = build_idf(["x y", "x"])
        assert table.weight("never") == table.default_weight

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_idf([])

    def test_accepts_documents(self):
        table = build_idf([Document("d1", "a b"), Document("d2", "a")])
        assert table.doc_count == 2

    @given(corpora)
    def test_rarer_terms_weigh_more(self, corpus):
        table = build_idf(corpus)
        df = {}
        for text in corpus:
            for tok in set(tokenize(text).tokens):
                df[tok] = df.get(tok, 0) + 1
        for t1 in df:
            for t2 in df:
                if df[t1] < df[t2]:
                    assert table.weight(t1) > table.weight(t2)
        for tok in df:
            assert table.weight(tok) < table.default_weight + 1e-12


class TestNGram:
    def test_unigram_add_one(self):
        # Tokens a,a,b with k=1, V=2: P(a)=(2+1)/(3+1*3)=0.5.
        model = train_ngram(["a a b"], n=1, smoothing_k=1.0)
        assert model.cond_prob("a") == pytest.approx(0.5)
        assert model.cond_prob("b") == pytest.approx(1.0 / 3.0)
        assert model.cond_prob("unseen") == pytest.approx(1.0 / 6.0)

    def test_bigram_counts(self):
        model = train_ngram(["a b a b"], n=2, smoothing_k=0.5)
        # count(a->b)=2, total(a)=2, V=2: P(b|a)=(2+0.5)/(2+0.5*3)=2.5/3.5.
        assert model.cond_prob("b", ["a"]) == pytest.approx(2.5 / 3.5)
        # Start-of-sequence context: count(<s>->a)=1.
        assert model.cond_prob("a", ["<s>"]) == pytest.approx(1.5 / 2.5)

    def test_unknown_context_is_uniform(self):
        model = train_ngram(["a b a b"], n=2, smoothing_k=1.0)
        assert model.cond_prob("a", ["qqq"]) == pytest.approx(1.0 / 3.0)

    def test_sequence_logprob_uses_padding(self):
        model = train_ngram(["a b a b"], n=2, smoothing_k=0.5)
        lp = ngram_logprob(model, ["a", "b"])
        expected = math.log(1.5 / 2.5) + math.log(2.5 / 3.5)
        assert lp == pytest.approx(expected)

    def test_empty_sequence_scores_zero(self):
        model = train_ngram(["a b"], n=2)
        assert ngram_logprob(model, []) == 0.0

    def test_empty_vocabulary_rejected_at_scoring(self):
        model = train_ngram([""], n=1)
        with pytest.raises(ValueError):
            model.cond_prob("a")

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            train_ngram(["a"], n=0)
        with pytest.raises(ValueError):
            train_ngram(["a"], n=1, smoothing_k=0.0)

    @given(corpora, st.integers(min_value=1, max_value=3))
    @settings(max_examples=50)
    def test_distributions_normalize(self, corpus, n):
        model = train_ngram(corpus, n=n, smoothing_k=0.7)
        if not model.vocabulary:
            return
        contexts = [()] if n == 1 else list(model.context_totals) + [("<s>",) * (n - 1)]
        for ctx in contexts[:8]:
            total = sum(model.cond_prob(t, ctx) for t in model.vocabulary)
            total += model.cond_prob("\x00never", ctx)
            assert total == pytest.approx(1.0, abs=1e-9)

    @given(corpora)
    @settings(max_examples=30)
    def test_pretokenized_input_matches_text_input(self, corpus):
        pretok = [list(tokenize(text).tokens) for text in corpus]
        m1 = train_ngram(corpus, n=2)
        m2 = train_ngram(pretok, n=2)
        assert m1.counts == m2.counts
        assert m1.vocabulary == m2.vocabulary


class TestEmbeddings:
    def test_cosine_frozen(self):
        assert cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.sqrt(0.5))

    def test_cosine_zero_vector(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_cosine_bounds(self):
        assert cosine([1e-8, 0], [1e-8, 1e-12]) <= 1.0

    def test_dimension_bound(self):
        with pytest.raises(ValueError):
            train_embeddings(["a b", "b c"], d=3)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train_embeddings([], d=1)

    def test_embed_out_of_vocabulary_is_zero(self):
        space = train_embeddings(["a b", "b c"], d=2)
        assert np.allclose(embed(space, "zzz qqq"), 0.0)
        assert cosine(embed(space, "zzz"), embed(space, "a b")) == 0.0

    def test_embed_is_mean_of_term_vectors(self):
        space = train_embeddings(["a b", "b c", "a c"], d=2)
        expected = (space.term_vectors["a"] + space.term_vectors["b"]) / 2
        assert np.allclose(embed(space, "a b!"), expected)

    def test_training_is_deterministic(self):
        corpus = ["the cat sat", "the dog ran", "a cat ran"]
        s1 = train_embeddings(corpus, d=3)
        s2 = train_embeddings(corpus, d=3)
        for tok in s1.term_vectors:
            assert np.array_equal(s1.term_vectors[tok], s2.term_vectors[tok])

    @given(corpora)
    @settings(max_examples=30)
    def test_full_rank_document_cosines_match_tfidf(self, corpus):
        vocab = {t for text in corpus for t in tokenize(text).tokens}
        if not vocab:
            return
        d = min(len(vocab), len(corpus))
        space = train_embeddings(corpus, d=d)
        idf = build_idf(corpus)
        index = {t: i for i, t in enumerate(sorted(vocab))}
        X = np.zeros((len(vocab), len(corpus)))
        for j, text in enumerate(corpus):
            for tok in tokenize(text).tokens:
                X[index[tok], j] += idf.weight(tok)
        docs = space.document_vectors
        assert docs is not None and docs.shape == (len(corpus), d)
        for i in range(len(corpus)):
            for j in range(len(corpus)):
                assert cosine(docs[i], docs[j]) == pytest.approx(
                    cosine(X[:, i], X[:, j]), abs=1e-6
                )
