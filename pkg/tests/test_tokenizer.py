import pytest
from hypothesis import given, strategies as st

from tvlab.errors import VocabError
from tvlab.tokenizer import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    SPECIAL_TOKENS,
    UNK_ID,
    UnknownAudit,
    Vocab,
    audit_unknowns,
    augment_vocab,
    decode,
    encode,
    fnv1a64,
    is_emoticon,
    load_vocab,
    read_audit,
    save_vocab,
    split_word,
    vocab_fingerprint,
    write_audit,
)


@pytest.fixture
def vocab():
    return Vocab(SPECIAL_TOKENS + ("lab", "##dien", "ir", "x"))


def test_load_vocab_basic(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nlab\n", encoding="utf-8")
    v = load_vocab(path)
    assert len(v) == 6
    assert v.id_of("lab") == 5
    assert v.id_of("[MASK]") == MASK_ID


def test_save_load_roundtrip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    save_vocab(vocab, path)
    assert load_vocab(path) == vocab
    # fingerprint equals FNV-1a of the file bytes
    assert vocab_fingerprint(vocab) == fnv1a64(path.read_bytes())


def test_duplicate_token_reports_both_lines(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text(
        "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n[PAD]\n", encoding="utf-8"
    )
    with pytest.raises(VocabError, match=r"lines 0 and 5"):
        load_vocab(path)


def test_missing_specials_rejected():
    with pytest.raises(VocabError, match="special"):
        Vocab(("[PAD]", "[UNK]", "lab"))


def test_encode_hand_traced(vocab):
    # greedy longest match: "labdien" -> "lab" + "##dien"
    ids, mask = encode("labdien", vocab, max_len=6)
    assert ids == [2, 5, 6, 3, 0, 0]
    assert mask == [1, 1, 1, 1, 0, 0]


def test_encode_unknown_word_is_single_unk(vocab):
    ids, mask = encode("😊", vocab, max_len=5)
    assert ids[:3] == [CLS_ID, UNK_ID, SEP_ID]


def test_encode_empty(vocab):
    ids, mask = encode("", vocab, max_len=4)
    assert ids == [CLS_ID, SEP_ID, PAD_ID, PAD_ID]
    assert mask == [1, 1, 0, 0]


def test_encode_exact_length_and_mask_sum(vocab):
    ids, mask = encode("lab ir x lab ir", vocab, max_len=4)
    assert len(ids) == 4 and len(mask) == 4
    # truncation keeps [CLS] and [SEP]
    assert ids[0] == CLS_ID and ids[-1] == SEP_ID
    assert sum(mask) == 4


def test_decode_inverse(vocab):
    assert decode([2, 5, 6, 3], vocab) == "labdien"
    assert decode([2, 3], vocab) == ""
    assert decode([2, 1, 3], vocab) == "[UNK]"


def test_decode_out_of_range(vocab):
    with pytest.raises(VocabError, match="out of range"):
        decode([2, 99, 3], vocab)


def test_split_word_greedy(vocab):
    assert split_word("labdien", vocab) == ["lab", "##dien"]
    assert split_word("zzz", vocab) is None


def test_audit_counts_and_emoticon_subset(vocab):
    # independent recount oracle: direct scan of the corpus
    corpus = ["labdien 😊", "😊 😢"]
    audit = audit_unknowns(corpus, vocab)
    expected = {}
    for text in corpus:
        for word in text.split():
            if split_word(word, vocab) is None:
                expected[word] = expected.get(word, 0) + 1
    assert audit.frequencies == expected == {"😊": 2, "😢": 1}
    assert audit.emoticons == expected
    assert audit.unique_count == 2


def test_audit_fully_known_and_empty(vocab):
    assert audit_unknowns(["lab ir x"], vocab).unique_count == 0
    empty = audit_unknowns([], vocab)
    assert empty.frequencies == {} and empty.emoticons == {}


def test_audit_file_roundtrip(tmp_path, vocab):
    audit = audit_unknowns(["labdien 😊", "😊 😢 zzz"], vocab)
    path = tmp_path / "audit.tsv"
    write_audit(audit, path)
    assert read_audit(path) == audit


def test_augment_top_k_ranking(vocab):
    audit = UnknownAudit(
        frequencies={"😊": 2, "😢": 1}, emoticons={"😊": 2, "😢": 1}
    )
    v2 = augment_vocab(vocab, audit, 1)
    assert len(v2) == len(vocab) + 1
    assert v2.tokens[-1] == "😊"


def test_augment_tie_breaks_by_code_point(vocab):
    audit = UnknownAudit(
        frequencies={"😢": 3, "😀": 3, "✂": 3},
        emoticons={"😢": 3, "😀": 3, "✂": 3},
    )
    v2 = augment_vocab(vocab, audit, 2)
    # U+2702 < U+1F600 < U+1F622
    assert v2.tokens[-2:] == ("✂", "😀")


def test_augment_k_zero_and_preserves_ids(vocab):
    audit = audit_unknowns(["😊"], vocab)
    assert augment_vocab(vocab, audit, 0) == vocab
    v2 = augment_vocab(vocab, audit, 5)
    for token in vocab.tokens:
        assert v2.id_of(token) == vocab.id_of(token)
    assert len(v2) == len(vocab) + 1  # only one distinct emoticon available


def test_augmentation_removes_unk(vocab):
    text = "lab 😊"
    before, _ = encode(text, vocab, 6)
    assert UNK_ID in before
    audit = audit_unknowns([text], vocab)
    v2 = augment_vocab(vocab, audit, 1)
    after, _ = encode(text, v2, 6)
    assert UNK_ID not in after


def test_is_emoticon_ranges():
    assert is_emoticon("😊")  # U+1F60A Emoticons block
    assert is_emoticon("🌧")  # U+1F327 Misc Symbols and Pictographs
    assert is_emoticon("🤖")  # U+1F916 Supplemental Symbols and Pictographs
    assert is_emoticon("✂")  # U+2702 Dingbats
    assert not is_emoticon(":)")
    assert not is_emoticon("a😊")
    assert not is_emoticon("")


def test_fnv1a64_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


# --- properties -------------------------------------------------------------

_vocab_words = ("lab", "##dien", "ir", "x", "zema", "##s", "un")


@given(
    st.lists(
        st.sampled_from(["labdien", "lab", "ir", "x", "zema", "zemas", "un"]),
        min_size=0,
        max_size=6,
    )
)
def test_encode_decode_identity_for_in_vocab_text(words):
    vocab = Vocab(SPECIAL_TOKENS + _vocab_words)
    text = " ".join(words)
    ids, mask = encode(text, vocab, max_len=64)
    assert UNK_ID not in ids
    assert decode(ids, vocab) == text
    assert len(ids) == 64
    assert sum(mask) == len([i for i in ids if i != PAD_ID])
