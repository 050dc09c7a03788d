import pytest

from formatlm.phonetics import (load_cmudict, load_pinyin_table,
                                phoneme_overlap, pinyin_final, rhyme_unit_en,
                                rhyme_unit_zh, rhyme_units_en, rhymes)

CMUDICT = """\
;;; comment line stays ignored
ASLEEP  AH0 S L IY1 P
STEEP  S T IY1 P
DEEP  D IY1 P
MINDS  M AY1 N D Z
READ  R IY1 D
READ(2)  R EH1 D
RED  R EH1 D
HMM  HH M
BADLINE
"""

PINYIN = """\
# char<TAB>pinyin
竹\tzhu2
独\tdu2
谷\tgu3
鱼\tyu2
马\tma3
行\txing2,hang2
"""


@pytest.fixture(scope="module")
def en(tmp_path_factory):
    p = tmp_path_factory.mktemp("lex") / "cmudict.txt"
    p.write_text(CMUDICT, encoding="utf-8")
    return load_cmudict(p)


@pytest.fixture(scope="module")
def zh(tmp_path_factory):
    p = tmp_path_factory.mktemp("lex") / "pinyin.tsv"
    p.write_text(PINYIN, encoding="utf-8")
    return load_pinyin_table(p)


def test_cmudict_parses_entries_and_variants(en):
    assert en.lookup("asleep") == [["AH0", "S", "L", "IY1", "P"]]
    assert en.lookup("STEEP") == [["S", "T", "IY1", "P"]]
    assert len(en.lookup("read")) == 2  # variant retained
    assert en.skipped == 1  # the malformed line


def test_rhyme_unit_en_from_last_stressed_vowel(en):
    assert rhyme_unit_en("asleep", en) == ("IY1", "P")
    assert rhyme_unit_en("steep", en) == ("IY1", "P")
    assert rhymes("asleep", "steep", en)


def test_rhyme_unit_en_oov_is_none(en):
    assert rhyme_unit_en("qzx", en) is None
    assert rhyme_units_en("qzx", en) == set()


def test_rhyme_unit_en_fallback_to_last_vowel(en):
    # no stressed vowel at all -> no unit
    assert rhyme_unit_en("hmm", en) is None


def test_multi_pronunciation_rhymes_on_any_variant(en):
    # READ rhymes with both DEEP (IY1 D? no: IY1 P...) -- use RED
    assert rhymes("read", "red", en)       # via the EH1 D variant
    assert rhymes("read", "deep", en) is False  # units differ (P vs D)
    assert ("EH1", "D") in rhyme_units_en("read", en)
    assert ("IY1", "D") in rhyme_units_en("read", en)


def test_rhyme_predicate_reflexive_and_symmetric(en):
    for w in ("asleep", "steep", "minds", "read"):
        assert rhymes(w, w, en)
    assert rhymes("asleep", "steep", en) == rhymes("steep", "asleep", en)
    assert rhymes("asleep", "minds", en) == rhymes("minds", "asleep", en)


def test_phoneme_overlap_counts_common_suffix(en):
    assert phoneme_overlap("asleep", "steep", en) == 2   # IY P
    assert phoneme_overlap("asleep", "minds", en) == 0
    assert phoneme_overlap("asleep", "qzx", en) == 0


def test_pinyin_finals(zh):
    assert rhyme_unit_zh("竹", zh) == "u"
    assert rhyme_unit_zh("独", zh) == "u"
    assert rhyme_unit_zh("谷", zh) == "u"
    assert rhymes("竹", "独", zh) and rhymes("独", "谷", zh)


def test_pinyin_umlaut_groups_with_u(zh):
    assert rhyme_unit_zh("鱼", zh) == "u"
    assert rhymes("鱼", "竹", zh)


def test_pinyin_non_rhyming_and_oov(zh):
    assert rhyme_unit_zh("马", zh) == "a"
    assert not rhymes("马", "竹", zh)
    assert rhyme_unit_zh("☃", zh) is None


def test_pinyin_multiple_readings(zh):
    from formatlm.phonetics import rhyme_units_zh

    assert rhyme_units_zh("行", zh) == {"ing", "ang"}


def test_pinyin_final_extraction_rules():
    assert pinyin_final("zhu2") == "u"
    assert pinyin_final("xing2") == "ing"
    assert pinyin_final("an4") == "an"      # zero initial
    assert pinyin_final("yu") == "u"        # y stripped, umlaut folded
    assert pinyin_final("lü4") == "u"
