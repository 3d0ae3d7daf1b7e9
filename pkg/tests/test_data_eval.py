import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contract_tagger.data import (Dataset, DatasetError, LabeledSequence, Span, TagSchema, dataset_stats,
                                  format_dataset, read_dataset, read_untagged, spans_from_tags,
                                  tags_from_spans)
from contract_tagger.metrics import entity_prf, macro_average, round_score
from contract_tagger.wordpiece import SubwordVocab, reassemble, word_fragmentation_ratio, wordpiece_tokenize


def write(tmp_path, text, name="d.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ------------------------------------------------------------------ schema

def test_schema_layout():
    s = TagSchema(("Title", "Party"))
    assert s.tags == ("O", "B-Title", "I-Title", "B-Party", "I-Party")
    assert len(s) == 2 * 2 + 1 and s.index["O"] == 0
    assert s.decode(s.encode(s.tags)) == list(s.tags)


# --------------------------------------------------------------- reading

def test_read_one_sequence(tmp_path):
    p = write(tmp_path, "#zone=header types=Title,Party\nThis\tDT\tO\nAgreement\tNN\tB-Title\n\n")
    data = read_dataset(p)
    assert len(data) == 1 and len(data[0]) == 2
    assert data.zone == "header" and data[0].tags == ("O", "B-Title")


def test_read_unknown_tag(tmp_path):
    p = write(tmp_path, "#zone=header types=Title,Party\nFoo\tNN\tB-Bogus\n\n")
    with pytest.raises(DatasetError, match="B-Bogus"):
        read_dataset(p)


def test_read_empty_file(tmp_path):
    with pytest.raises(DatasetError, match="no sequences"):
        read_dataset(write(tmp_path, ""))


def test_read_malformed_line_reports_number(tmp_path):
    p = write(tmp_path, "#zone=z types=A\nok\tNN\tO\nbroken line\n\n")
    with pytest.raises(DatasetError, match="line 3"):
        read_dataset(p)


def test_round_trip_format(tmp_path):
    schema = TagSchema(("A",), zone="z")
    data = Dataset(schema, [LabeledSequence.make(["x", "y"], ["NN", "NN"], ["B-A", "I-A"], "z"),
                            LabeledSequence.make(["q"], ["DT"], ["O"], "z")])
    p = write(tmp_path, format_dataset(data))
    again = read_dataset(p)
    assert again.sequences == data.sequences and again.schema == schema


def test_read_untagged(tmp_path):
    p = write(tmp_path, "This\tDT\nDeed\tNN\n\nOther\tNN\tO\n")
    seqs = read_untagged(p)
    assert [s.tokens for s in seqs] == [("This", "Deed"), ("Other",)]
    assert read_untagged(write(tmp_path, "", "empty.txt")) == []


# ------------------------------------------------------------------ spans

@pytest.mark.parametrize("tags,expected", [
    (["B-Party", "I-Party", "O"], [Span(0, 2, "Party")]),
    (["O", "I-Date"], [Span(1, 2, "Date")]),
    (["B-Party", "I-Date"], [Span(0, 1, "Party"), Span(1, 2, "Date")]),
    (["B-A", "B-A", "I-A"], [Span(0, 1, "A"), Span(1, 3, "A")]),
    (["O", "O"], []),
])
def test_spans_from_tags(tags, expected):
    assert spans_from_tags(tags) == expected


@st.composite
def span_lists(draw):
    n = draw(st.integers(1, 20))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=n)))
    spans = []
    for a, b in zip(cuts, cuts[1:]):
        if draw(st.booleans()):
            spans.append(Span(a, b, draw(st.sampled_from(["A", "B", "C"]))))
    return n, spans


@settings(max_examples=200)
@given(span_lists())
def test_span_tag_round_trip(case):
    n, spans = case
    assert spans_from_tags(tags_from_spans(spans, n)) == spans


# ---------------------------------------------------------------- metrics

def brute_prf(gold, pred):
    """Set-intersection reference."""
    types = {s.type for g in gold for s in g} | {s.type for p in pred for s in p}
    out = {}
    for t in types:
        G = {(i, s) for i, g in enumerate(gold) for s in g if s.type == t}
        P = {(i, s) for i, p in enumerate(pred) for s in p if s.type == t}
        tp = len(G & P)
        prec = tp / len(P) if P else 0.0
        rec = tp / len(G) if G else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out[t] = (tp, len(P) - tp, len(G) - tp, prec, rec, f1)
    # sorted so the float sum runs in the same (type-name) order as the report
    gold_types = sorted({s.type for g in gold for s in g})
    macro = sum(out[t][5] for t in gold_types) / len(gold_types) if gold_types else 0.0
    return out, macro


def test_prf_identity():
    gold = [[Span(0, 2, "Party"), Span(3, 4, "Date")], [Span(1, 2, "Title")]]
    rep = entity_prf(gold, gold)
    assert all(s.precision == s.recall == s.f1 == 1.0 for s in rep.per_type.values())
    assert rep.macro_f1 == 1.0


def test_prf_half():
    gold = [[Span(0, 2, "Party"), Span(4, 6, "Party")]]
    pred = [[Span(0, 2, "Party"), Span(7, 8, "Party")]]
    s = entity_prf(gold, pred).per_type["Party"]
    assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)


def test_prf_zero_division_is_zero():
    rep = entity_prf([[Span(0, 1, "A")]], [[]])
    assert rep.per_type["A"].precision == 0.0 and rep.per_type["A"].f1 == 0.0


def test_macro_excludes_types_absent_from_gold():
    rep = entity_prf([[Span(0, 1, "A")]], [[Span(0, 1, "A"), Span(2, 3, "B")]], types=("A", "B", "C"))
    assert set(rep.per_type) == {"A", "B", "C"}
    assert rep.macro_types == ("A",) and rep.macro_f1 == 1.0


@st.composite
def corpora(draw):
    n = draw(st.integers(1, 20))
    spans = st.builds(lambda a, l, t: Span(a, a + l, t), st.integers(0, 8), st.integers(1, 3),
                      st.sampled_from(["A", "B", "C"]))
    gold = [draw(st.lists(spans, max_size=4, unique=True)) for _ in range(n)]
    pred = [draw(st.lists(spans, max_size=4, unique=True)) for _ in range(n)]
    return gold, pred


@settings(max_examples=200)
@given(corpora())
def test_prf_matches_set_oracle(case):
    gold, pred = case
    rep = entity_prf(gold, pred)
    ref, macro = brute_prf(gold, pred)
    assert set(rep.per_type) == set(ref)
    for t, s in rep.per_type.items():
        assert (s.tp, s.fp, s.fn, s.precision, s.recall, s.f1) == ref[t]
    assert rep.macro_f1 == macro


def test_macro_is_mean_of_f1_not_f1_of_means():
    gold = [[Span(0, 1, "A"), Span(2, 3, "B"), Span(4, 5, "B")]]
    pred = [[Span(0, 1, "A"), Span(6, 7, "A"), Span(2, 3, "B")]]
    rep = entity_prf(gold, pred)
    mean_f1 = (rep.per_type["A"].f1 + rep.per_type["B"].f1) / 2
    p, r = rep.macro_precision, rep.macro_recall
    assert rep.macro_f1 == mean_f1
    assert abs(rep.macro_f1 - 2 * p * r / (p + r)) > 1e-6


def test_table_macro_row():
    rep = entity_prf([[Span(0, 1, "A")], [Span(0, 1, "B")]], [[Span(0, 1, "A")], []])
    lines = rep.table().splitlines()
    assert lines[-1].split() == ["macro-avg", "50.0", "50.0", "50.0"]
    assert macro_average([]) == 0.0


@pytest.mark.parametrize("x,expected", [(86.55000000000001, 86.5), (95.24999999999999, 95.2),
                                         (12.36, 12.4), (12.34, 12.3), (100.0, 100.0), (0.0, 0.0)])
def test_round_score(x, expected):
    assert round_score(x) == expected


# ------------------------------------------------------------------ stats

def test_stats():
    seq = LabeledSequence.make(["a", "b", "c"], tags=["B-Party", "I-Party", "O"])
    st_ = dataset_stats([seq], types=("Party", "Title"))
    assert st_.spans == {"Party": 1, "Title": 0} and st_.sequences == 1 and st_.tokens == 3
    assert dataset_stats([LabeledSequence.make(["a"])], types=("Party",)).spans == {"Party": 0}


# -------------------------------------------------------------- wordpiece

VOCAB = SubwordVocab(frozenset({"un", "##able", "able", "the"}))


def test_wordpiece_examples():
    assert wordpiece_tokenize("the", VOCAB) == ["the"]
    assert wordpiece_tokenize("unable", VOCAB) == ["un", "##able"]
    assert wordpiece_tokenize("xyz", VOCAB) == ["[UNK]"]


def test_wfr_examples():
    assert word_fragmentation_ratio(["the", "able"], VOCAB) == 1.0
    assert abs(word_fragmentation_ratio(["unable", "the"], VOCAB) - 1.5) < 1e-12
    assert abs(word_fragmentation_ratio(["unable", "the", "the"], VOCAB, weighted=True) - 4 / 3) < 1e-12
    assert word_fragmentation_ratio(["unable", "the"], VOCAB, restrict={"the"}.__contains__) == 1.0
    with pytest.raises(ValueError):
        word_fragmentation_ratio([], VOCAB)


def test_lowercase_flag():
    v = SubwordVocab(frozenset({"the"}), lowercase=True)
    assert wordpiece_tokenize("The", v) == ["the"]
    assert wordpiece_tokenize("The", SubwordVocab(frozenset({"the"}))) == ["[UNK]"]


LETTERS = string.ascii_letters
FULL = SubwordVocab(frozenset(set(LETTERS) | {"##" + c for c in LETTERS}
                              | {"con", "##tract", "##ing", "lease", "##ed", "agree", "##ment"}))


@settings(max_examples=300)
@given(st.text(alphabet=LETTERS, min_size=1, max_size=15))
def test_reassemble_identity(word):
    pieces = wordpiece_tokenize(word, FULL)
    assert "[UNK]" not in pieces
    assert reassemble(pieces) == word
