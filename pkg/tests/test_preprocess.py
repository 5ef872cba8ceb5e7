import io
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from unredact.corpus import AnnotatedDocument, Annotation, EntityLabel, RedactedSample
from unredact.preprocess import (
    SentenceSpan,
    StraddlingAnnotation,
    corpus_samples,
    document_samples,
    localize,
    materialize,
    normalize_text,
    read_samples,
    split_sentences,
    write_samples,
)

EXAMPLE_TEXT = "It happened on 19/10/2004. Paolo was in Amsterdam."


def test_title_newlines_become_dot_and_spaces():
    text = "THE FACTS\n\nThe applicant was born in 1970."
    out = normalize_text(text)
    assert out == "THE FACTS. The applicant was born in 1970."
    assert len(out) == len(text)


def test_long_newline_run_after_title():
    out = normalize_text("PROCEDURE\n\n\n\nThe case")
    assert out == "PROCEDURE.   The case"


def test_plain_newlines_become_spaces():
    assert normalize_text("was born\nin Riga") == "was born in Riga"


def test_identity_without_newlines():
    assert normalize_text("abc") == "abc"


@pytest.mark.parametrize("raw,expected", [
    ("application no. 36619/03", "application no_ 36619/03"),
    ("applications nos. 1/01 and 2/02", "applications nos_ 1/01 and 2/02"),
    ("Application No. 5", "Application No_ 5"),
    ("the casino. Then", "the casino. Then"),
])
def test_abbreviation_dots(raw, expected):
    assert normalize_text(raw) == expected


@given(st.text(alphabet=st.sampled_from(list("aB .\nno?!XYZ*")), max_size=80))
def test_normalize_preserves_length(text):
    assert len(normalize_text(text)) == len(text)


def test_split_example_sentences():
    spans = split_sentences(EXAMPLE_TEXT)
    first, second = "It happened on 19/10/2004.", "Paolo was in Amsterdam."
    # expected ends counted from the sentences themselves
    expected = [(0, len(first)), (len(first) + 1, len(first) + 1 + len(second))]
    assert expected == [(0, 26), (27, 50)]
    assert [s.span for s in spans] == expected
    assert [s.text for s in spans] == ["It happened on 19/10/2004.", "Paolo was in Amsterdam."]


def test_split_empty():
    assert split_sentences("") == []


def test_no_split_at_masked_abbreviation():
    assert len(split_sentences("application no_ 36619/03 was filed.")) == 1


@pytest.mark.parametrize("text", [
    "See art. 6 of the Convention.",
    "Smith v. Jones was decided.",
    "The witness J. Smith arrived.",
    "Documents, e.g. Letters, were lost.",
])
def test_abbreviations_do_not_split(text):
    assert len(split_sentences(text)) == 1


def test_split_before_redaction():
    spans = split_sentences("He left. ***** stayed.")
    assert [s.text for s in spans] == ["He left.", "***** stayed."]


@given(st.text(alphabet=st.sampled_from(list("ab AB.?!1 *")), max_size=60))
def test_sentences_cover_text(text):
    spans = split_sentences(text)
    pos = 0
    for s in spans:
        assert s.start >= pos
        assert text[pos:s.start].strip() == ""
        assert s.text == text[s.start:s.end] and s.text == s.text.strip() and s.text
        pos = s.end
    assert text[pos:].strip() == ""


def _example_doc():
    return AnnotatedDocument("t1", EXAMPLE_TEXT, (
        Annotation(15, 25, EntityLabel.DATETIME),
        Annotation(27, 32, EntityLabel.PERSON),
        Annotation(27 + 13, 27 + 22, EntityLabel.LOC),
    ))


def test_localize_relative_offsets():
    doc = _example_doc()
    pairs = localize(doc, split_sentences(doc.text, doc.id))
    rel = [(a.start, a.end) for _, a in pairs]
    assert rel == [(15, 25), (0, 5), (13, 22)]
    for (sent, ann), orig in zip(pairs, doc.annotations):
        assert sent.text[ann.start:ann.end] == doc.text[orig.start:orig.end]


def test_localize_straddling():
    doc = AnnotatedDocument("s", EXAMPLE_TEXT, (Annotation(20, 32, EntityLabel.MISC),))
    sentences = split_sentences(doc.text)
    with pytest.raises(StraddlingAnnotation) as exc:
        localize(doc, sentences)
    assert exc.value.doc_id == "s" and exc.value.indices == [0]
    assert localize(doc, sentences, on_straddle="skip") == []


def test_materialize_two_entities():
    sent = SentenceSpan("t1", 27, 50, "Paolo was in Amsterdam.")
    samples = materialize(sent, [Annotation(0, 5, EntityLabel.PERSON), Annotation(13, 22, EntityLabel.LOC)])
    assert [(s.redacted_sentence, s.label) for s in samples] == [
        ("***** was in Amsterdam.", EntityLabel.PERSON),
        ("Paolo was in *********.", EntityLabel.LOC),
    ]


def test_materialize_date_row():
    sent = SentenceSpan("t1", 0, 26, "It happened on 19/10/2004.")
    (sample,) = materialize(sent, [Annotation(15, 25, EntityLabel.DATETIME)])
    assert sample.redacted_sentence == "It happened on **********."
    assert sample.redacted_sentence.count("*") == 10


def test_single_character_span():
    sent = SentenceSpan("x", 0, 3, "a b")
    (sample,) = materialize(sent, [Annotation(0, 1, EntityLabel.CODE)])
    assert sample.redacted_sentence == "* b"


def test_document_samples_one_per_annotation():
    samples = document_samples(_example_doc())
    assert len(samples) == 3
    assert Counter(s.label for s in samples) == Counter(
        [EntityLabel.DATETIME, EntityLabel.PERSON, EntityLabel.LOC])


@st.composite
def _sample(draw):
    sentence = draw(st.text(alphabet=st.characters(blacklist_characters="*"), min_size=1, max_size=30))
    start = draw(st.integers(0, len(sentence) - 1))
    end = draw(st.integers(start + 1, len(sentence)))
    return RedactedSample(sentence, start, end, draw(st.sampled_from(list(EntityLabel))))


@given(_sample())
def test_redaction_properties(sample):
    s, r = sample.sentence, sample.redacted_sentence
    assert len(s) == len(r)
    assert r[sample.start:sample.end] == "*" * (sample.end - sample.start)
    assert Counter(s[:sample.start] + s[sample.end:]) == Counter(r[:sample.start] + r[sample.end:])
    restored = r[:sample.start] + s[sample.start:sample.end] + r[sample.end:]
    assert restored == s


def test_samples_jsonl_roundtrip():
    samples = corpus_samples([_example_doc()])
    buf = io.StringIO()
    write_samples(samples, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3
    assert '"start": 15' in lines[0] and '"len": 10' in lines[0]
    buf.seek(0)
    assert list(read_samples(buf)) == samples
