"""Tests for the four writing-feature families and their assembly."""

import math
from importlib import resources as ir

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langassess.features import (
    FeatureResources,
    WritingResponse,
    coherence_features,
    content_features,
    extract_all,
    grammar_features,
    heuristic_depth,
    lexis_features,
    load_grammar_rules,
    load_wordlist,
)
from langassess.text import build_idf, train_embeddings, train_ngram

RES_DIR = ir.files("langassess") / "resources"

RULES = load_grammar_rules(str(RES_DIR / "grammar_rules.json"))


@pytest.fixture(scope="module")
def resources():
    corpus = [
        "The red fox jumped over the fence.",
        "A small dog slept in the garden.",
        "Cats run when dogs bark loudly.",
        "The garden was quiet in the morning.",
        "People walk to work in the city.",
        "Rain fell on the quiet street.",
    ]
    return FeatureResources(
        idf=build_idf(corpus),
        space=train_embeddings(corpus, d=4),
        wordlist=load_wordlist(str(RES_DIR / "cefr_wordlist.tsv")),
        dwu_low=train_ngram(["the cat sat on the mat", "i like my dog"], n=1),
        dwu_high=train_ngram(
            ["the empirical evidence was compelling", "a profound notion emerged"], n=1
        ),
        grammar_rules=RULES,
    )


class TestContent:
    def test_identical_texts_score_one(self):
        idf = build_idf(["cats sleep", "cats run", "dogs run"])
        fv = content_features("cats sleep well", "cats sleep well", idf)
        assert fv.values["content_similarity"] == pytest.approx(1.0)

    def test_disjoint_texts_score_zero(self):
        idf = build_idf(["cats sleep", "cats run", "dogs run"])
        fv = content_features("cats sleep", "dogs bark", idf)
        assert fv.values["content_similarity"] == pytest.approx(0.0)

    def test_weighted_cosine_hand_value(self):
        # Corpus of 3 docs: df(cats)=2, df(sleep)=1, df(run)=2.
        # idf(cats)=idf(run)=ln(4/3)+1=c, idf(sleep)=ln 2+1=s.
        # prompt (cats, sleep) vs response (cats, run):
        #   cos = c^2 / (sqrt(c^2+s^2) * c*sqrt(2)) = c / (sqrt(2) sqrt(c^2+s^2))
        idf = build_idf(["cats sleep", "cats run", "dogs run"])
        fv = content_features("cats sleep", "cats run", idf)
        c = math.log(4 / 3) + 1
        s = math.log(2) + 1
        expected = c / (math.sqrt(2) * math.sqrt(c * c + s * s))
        assert fv.values["content_similarity"] == pytest.approx(expected, abs=1e-12)
        assert fv.values["content_similarity"] == pytest.approx(0.4280, abs=5e-4)

    def test_empty_response_scores_zero(self):
        idf = build_idf(["cats sleep"])
        fv = content_features("cats sleep", "", idf)
        assert fv.values["content_similarity"] == 0.0

    def test_grouping(self):
        idf = build_idf(["a"])
        assert content_features("a", "a", idf).grouping == {
            "content_similarity": "content"
        }


class TestCoherence:
    def test_single_sentence_degenerates_to_zero(self, resources):
        fv = coherence_features("The fox jumped over the fence.", resources.space)
        assert fv.values["sentence_overlap"] == 0.0
        assert fv.values["adjacent_similarity_mean"] == 0.0
        assert fv.values["adjacent_similarity_min"] == 0.0
        assert fv.values["reference_chain_count"] == 0.0

    def test_identical_sentences_full_overlap(self, resources):
        fv = coherence_features("The fox jumped. The fox jumped.", resources.space)
        assert fv.values["sentence_overlap"] == pytest.approx(1.0)

    def test_three_sentence_jaccard_hand_value(self, resources):
        # Content sets: {red,fox,jumped}, {red,dog,slept}, {fox,slept,here}.
        # J12 = |{red}|/5, J23 = |{slept}|/5, mean = 0.2.
        text = "The red fox jumped. The red dog slept. A fox slept here."
        fv = coherence_features(text, resources.space)
        assert fv.values["sentence_overlap"] == pytest.approx(0.2)
        # References: sentence 2 repeats "red" (1); sentence 3 repeats fox+slept (2).
        assert fv.values["reference_chain_count"] == 3.0

    def test_pronoun_references_counted(self, resources):
        text = "The man arrived. He sat quietly. The man smiled."
        fv = coherence_features(text, resources.space)
        # "he" in sentence 2, "man" repeated in sentence 3.
        assert fv.values["reference_chain_count"] == 2.0

    def test_adjacent_similarity_bounds(self, resources):
        text = "The red fox jumped. Cats run loudly. The garden was quiet."
        fv = coherence_features(text, resources.space)
        assert -1.0 <= fv.values["adjacent_similarity_min"] <= 1.0
        assert fv.values["adjacent_similarity_min"] <= fv.values["adjacent_similarity_mean"]


class TestLexis:
    def test_proportions_by_counting(self, resources):
        wl = {"good": "A1", "excellent": "B2"}
        dwu = (resources.dwu_low, resources.dwu_low)
        fv = lexis_features("good good excellent", wl, dwu)
        assert fv.values["cefr_a1"] == pytest.approx(2 / 3)
        assert fv.values["cefr_b2"] == pytest.approx(1 / 3)
        assert fv.values["cefr_unlisted"] == 0.0

    def test_identical_models_zero_logodds(self, resources):
        dwu = (resources.dwu_low, resources.dwu_low)
        fv = lexis_features("any words at all here", {}, dwu)
        assert fv.values["word_use_logodds"] == 0.0

    def test_hand_computed_logodds(self):
        # low over tokens a,a,b and high over b,b,a (unigram, k=1, V=2):
        # P_low(b)=2/6, P_high(b)=3/6 -> log-odds ln(3/2) for text "b".
        low = train_ngram(["a a b"], n=1)
        high = train_ngram(["b b a"], n=1)
        fv = lexis_features("b", {}, (low, high))
        assert fv.values["word_use_logodds"] == pytest.approx(math.log(1.5))
        # "a b" is perfectly symmetric between the models.
        fv2 = lexis_features("a b", {}, (low, high))
        assert fv2.values["word_use_logodds"] == pytest.approx(0.0, abs=1e-12)

    def test_empty_response_all_zero(self, resources):
        fv = lexis_features("", resources.wordlist, (resources.dwu_low, resources.dwu_high))
        assert all(v == 0.0 for v in fv.values.values())

    def test_proportions_sum_to_one(self, resources):
        fv = lexis_features(
            "The ubiquitous cat served compelling evidence daily",
            resources.wordlist,
            (resources.dwu_low, resources.dwu_high),
        )
        total = sum(v for k, v in fv.values.items() if k.startswith("cefr_"))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestGrammar:
    def test_depth_heuristic_single_marker(self):
        assert heuristic_depth("I left because it rained.") == 2

    def test_depth_heuristic_plain_sentence(self):
        assert heuristic_depth("The cat sat.") == 1

    def test_article_before_vowel(self):
        fv = grammar_features("a apple", heuristic_depth, RULES)
        assert fv.values["error_rate_article"] == pytest.approx(0.5)

    def test_an_before_consonant(self):
        fv = grammar_features("She ate an pear today.", heuristic_depth, RULES)
        assert fv.values["error_rate_article"] == pytest.approx(1 / 5)

    def test_agreement_errors(self):
        fv = grammar_features("he are happy", heuristic_depth, RULES)
        assert fv.values["error_rate_agreement"] == pytest.approx(1 / 3)
        fv2 = grammar_features("They is here and I has food.", heuristic_depth, RULES)
        assert fv2.values["error_rate_agreement"] == pytest.approx(2 / 7)

    def test_doubled_word(self):
        fv = grammar_features("the the cat", heuristic_depth, RULES)
        assert fv.values["error_rate_doubled_word"] == pytest.approx(1 / 3)

    def test_three_sentence_depths_hand_value(self):
        text = "I left because it rained. She knew that he lied when he spoke. We ran."
        fv = grammar_features(text, heuristic_depth, RULES)
        # Depths 2, 3, 1 by marker counting.
        assert fv.values["depth_mean"] == pytest.approx(2.0)
        assert fv.values["depth_max"] == 3.0

    def test_empty_response(self):
        fv = grammar_features("", heuristic_depth, RULES)
        assert fv.values["depth_mean"] == 0.0
        assert fv.values["error_rate_article"] == 0.0

    def test_bad_depth_provider_rejected(self):
        with pytest.raises(ValueError):
            grammar_features("Hello there.", lambda s: 0, RULES)


SCHEMA = (
    "content_similarity",
    "sentence_overlap",
    "reference_chain_count",
    "adjacent_similarity_mean",
    "adjacent_similarity_min",
    "cefr_a1",
    "cefr_a2",
    "cefr_b1",
    "cefr_b2",
    "cefr_c1",
    "cefr_c2",
    "cefr_unlisted",
    "word_use_logodds",
    "depth_mean",
    "depth_max",
    "error_rate_article",
    "error_rate_agreement",
    "error_rate_doubled_word",
)


class TestExtractAll:
    def test_schema_order_is_fixed(self, resources):
        fv = extract_all("A prompt.", "A response here.", resources)
        assert fv.names == SCHEMA

    def test_empty_response_is_all_zero(self, resources):
        fv = extract_all("Describe your city.", "", resources)
        assert fv.names == SCHEMA
        assert all(v == 0.0 for v in fv.values.values())

    def test_matches_family_calls(self, resources):
        prompt, text = "Describe a garden.", "The garden was quiet. It had a a tree."
        fv = extract_all(prompt, text, resources)
        assert fv.values["content_similarity"] == content_features(
            prompt, text, resources.idf
        ).values["content_similarity"]
        coh = coherence_features(text, resources.space)
        for name in coh.values:
            assert fv.values[name] == coh.values[name]
        gram = grammar_features(text, resources.depth_provider, resources.grammar_rules)
        for name in gram.values:
            assert fv.values[name] == gram.values[name]

    def test_deterministic(self, resources):
        r = WritingResponse("r1", "p1", "The dog slept. It was tired.", 20, 250)
        a = extract_all("Describe a pet.", r, resources)
        b = extract_all("Describe a pet.", r, resources)
        assert a.values == b.values and a.grouping == b.grouping

    def test_accepts_response_objects(self, resources):
        r = WritingResponse("r1", "p1", "Cats run loudly.")
        fv = extract_all("Describe how cats run.", r, resources)
        assert fv.values["content_similarity"] > 0

    @given(
        st.lists(
            st.sampled_from(
                "the cat dog garden quiet red fox jumped because it he ran a an".split()
            ),
            min_size=0,
            max_size=25,
        ).map(" ".join)
    )
    @settings(max_examples=40)
    def test_case_and_trailing_whitespace_invariance(self, resources, text):
        base = extract_all("Describe a garden.", text, resources)
        changed = extract_all("Describe a garden.", text.upper() + "  \n ", resources)
        for name in SCHEMA:
            assert base.values[name] == pytest.approx(changed.values[name], abs=1e-12)

    @given(
        st.lists(
            st.sampled_from(
                "the cat dog ran fast slowly because evidence good a it".split()
            ),
            min_size=1,
            max_size=30,
        ).map(" ".join)
    )
    @settings(max_examples=40)
    def test_ranges_and_sums(self, resources, text):
        fv = extract_all("Describe a day.", text, resources)
        cefr_total = sum(v for k, v in fv.values.items() if k.startswith("cefr_"))
        assert cefr_total == pytest.approx(1.0, abs=1e-9)
        for key in ("error_rate_article", "error_rate_agreement", "error_rate_doubled_word"):
            assert 0.0 <= fv.values[key] <= 1.0
        assert fv.values["depth_mean"] >= 1.0
        assert fv.values["depth_max"] >= fv.values["depth_mean"]
        assert 0.0 <= fv.values["content_similarity"] <= 1.0

    def test_grouping_covers_four_families(self, resources):
        fv = extract_all("x", "Some response text.", resources)
        assert set(fv.grouping.values()) == {"content", "coherence", "lexis", "grammar"}


class TestResourceFiles:
    def test_wordlist_loads(self):
        wl = load_wordlist(str(RES_DIR / "cefr_wordlist.tsv"))
        assert wl["house"] == "A1"
        assert wl["ubiquitous"] == "C2"
        assert len(wl) >= 150

    def test_rules_load(self):
        assert {r.error_type for r in RULES} == {"article", "agreement", "doubled_word"}

    def test_bad_wordlist_rejected(self, tmp_path):
        bad = tmp_path / "wl.tsv"
        bad.write_text("word\tZ9\n")
        with pytest.raises(ValueError):
            load_wordlist(bad)
