import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contract_tagger import tensor as tc
from contract_tagger.data import LabeledSequence
from contract_tagger.features import (PAD, PAD_ID, UNK, UNK_ID, CharCnnConfig, EmbeddingTable, Vocabulary,
                                      build_vocab, char_cnn_embed, char_cnn_nodes, embed_sequence, init_char_cnn,
                                      load_pretrained, save_embeddings, token_shape, word_dropout)


def seq(text, pos=None):
    toks = text.split()
    return LabeledSequence.make(toks, pos or ["NN"] * len(toks))


@pytest.mark.parametrize("token,shape", [("Agreement", "Xx"), ("2021,", "d,"), ("26th", "dx"),
                                         ("U.S.", "X.X."), ("LLC", "X")])
def test_token_shape(token, shape):
    assert token_shape(token) == shape


def test_token_shape_empty():
    with pytest.raises(ValueError):
        token_shape("")


@given(st.text(alphabet="AbZq", min_size=1, max_size=12))
def test_token_shape_idempotent_on_letters(word):
    s = token_shape(word)
    assert set(s) <= set("Xx")
    assert token_shape(s) == s


def test_token_shape_digit_symbol_is_lowercase():
    # "d" is itself a lowercase letter, so re-shaping a digit class is not a fixed point
    assert token_shape(token_shape("7")) == "x"


def test_build_vocab_examples():
    assert build_vocab([seq("a a b")]).entries == [PAD, UNK, "a", "b"]
    assert build_vocab([seq("a a b")], min_count=2).entries == [PAD, UNK, "a"]
    assert build_vocab([seq("Feb 26th")], "shape").entries == [PAD, UNK, "Xx", "dx"]
    assert build_vocab([seq("c b b a")]).entries == [PAD, UNK, "b", "a", "c"]
    with pytest.raises(ValueError):
        build_vocab([])
    with pytest.raises(ValueError):
        build_vocab([seq("a")], min_count=0)


def test_vocab_lookup_round_trip():
    v = build_vocab([seq("x y z y")])
    assert v.lookup("never-seen") == UNK_ID
    for i in range(2, len(v)):
        assert v.lookup(v.entries[i]) == i


# ------------------------------------------------------------ pretrained

def test_load_pretrained_copies_and_flags_missing(tmp_path):
    p = tmp_path / "vec.txt"
    p.write_text("the 0.1 0.2\nfoo 0.3 0.4\n")
    v = Vocabulary([PAD, UNK, "the", "absent"])
    table = load_pretrained(p, v, 2, np.random.default_rng(0))
    assert table.matrix[2].tolist() == [0.1, 0.2]
    assert np.allclose(table.matrix[UNK_ID], [0.2, 0.3])
    assert table.matrix[PAD_ID].tolist() == [0.0, 0.0]
    assert table.coverage.missing == ["absent"] and table.coverage.ratio == 0.5


def test_load_pretrained_dimension_error_has_line(tmp_path):
    p = tmp_path / "vec.txt"
    p.write_text("the 0.1 0.2\nbad 0.1 0.2 0.3\n")
    with pytest.raises(ValueError, match="line 2"):
        load_pretrained(p, Vocabulary([PAD, UNK, "the"]), 2, np.random.default_rng(0))


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_pretrained(tmp_path / "nope.txt", Vocabulary([PAD, UNK]), 2, np.random.default_rng(0))


def test_pretrained_save_load_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    v = Vocabulary([PAD, UNK, "alpha", "beta", "gamma"])
    table = EmbeddingTable(v, rng.normal(size=(5, 7)))
    path = tmp_path / "e.txt"
    save_embeddings(path, table)
    again = load_pretrained(path, v, 7, np.random.default_rng(2))
    assert np.array_equal(again.matrix[2:], table.matrix[2:])
    assert again.coverage.ratio == 1.0


# ---------------------------------------------------------------- embed

def tables(rng, corpus, dims=(("word", 200), ("pos", 25), ("shape", 25))):
    return {f: EmbeddingTable.random(build_vocab(corpus, f), d, rng) for f, d in dims}


def test_embed_dims_and_word_only():
    rng = np.random.default_rng(0)
    s = seq("This Agreement is made", ["DT", "NNP", "VBZ", "VBN"])
    full = tables(rng, [s])
    assert embed_sequence(s, full).shape == (4, 250)
    word = {"word": full["word"]}
    out = embed_sequence(s, word)
    assert np.array_equal(out, full["word"].matrix[full["word"].vocab.lookup_all(s.tokens)])


def test_embed_unseen_maps_to_unk():
    rng = np.random.default_rng(0)
    t = tables(rng, [seq("a b")], (("word", 4),))
    out = embed_sequence(seq("zzz"), t)
    assert np.array_equal(out[0], t["word"].matrix[UNK_ID])


def test_embed_rows_independent():
    rng = np.random.default_rng(3)
    s1, s2 = seq("a b c"), seq("a q c")
    t = tables(rng, [s1, s2], (("word", 5), ("shape", 3)))
    cfg = CharCnnConfig(build_vocab([s1, s2], "char"), char_dim=4, width=3, filters=6)
    params = init_char_cnn(cfg, rng)
    o1 = embed_sequence(s1, t, (cfg, params))
    o2 = embed_sequence(s2, t, (cfg, params))
    assert np.array_equal(o1[[0, 2]], o2[[0, 2]])
    assert not np.array_equal(o1[1], o2[1])


# ---------------------------------------------------------------- char CNN

def char_setup(width=3, filters=4, dim=3):
    vocab = Vocabulary([PAD, UNK, "a", "b", "c", "d"])
    cfg = CharCnnConfig(vocab, char_dim=dim, width=width, filters=filters)
    return cfg, init_char_cnn(cfg, np.random.default_rng(0))


def test_char_cnn_zero_filters():
    cfg, p = char_setup()
    p["W"][:] = 0.0
    assert np.array_equal(char_cnn_embed("abcd", cfg, p), np.zeros(4))
    rng = np.random.default_rng(0)
    s = seq("ab dd")
    t = tables(rng, [s], (("word", 3),))
    out = embed_sequence(s, t, (cfg, p))
    assert np.array_equal(out[:, 3:], np.zeros((2, 4)))


def test_char_cnn_single_filter_hand_computed():
    vocab = Vocabulary([PAD, UNK, "a", "b", "c"])
    cfg = CharCnnConfig(vocab, char_dim=1, width=2, filters=1)
    emb = np.array([[0.0], [0.0], [1.0], [2.0], [-3.0]])
    W = np.array([[[1.0]], [[-1.0]]])
    p = {"emb": emb, "W": W, "b": np.array([0.5])}
    # windows over "abc": a-b = -1, b-c = 5; plus bias 0.5 -> max 5.5
    assert char_cnn_embed("abc", cfg, p).tolist() == [5.5]
    # "ca": only window c-a = -4 + 0.5 -> relu gives 0
    assert char_cnn_embed("ca", cfg, p).tolist() == [0.0]


def test_char_cnn_filter_permutation():
    cfg, p = char_setup(filters=5)
    p["b"] = np.random.default_rng(4).normal(size=5)
    perm = np.array([3, 0, 4, 1, 2])
    q = dict(p, W=p["W"][:, :, perm], b=p["b"][perm])
    assert np.array_equal(char_cnn_embed("cab", cfg, q), char_cnn_embed("cab", cfg, p)[perm])


def test_char_cnn_short_word_padded():
    cfg, p = char_setup(width=3)
    assert char_cnn_embed("a", cfg, p).shape == (4,)
    with pytest.raises(ValueError):
        char_cnn_embed("", cfg, p)
    with pytest.raises(ValueError):
        CharCnnConfig(cfg.vocab, width=0)


def test_char_cnn_gradients():
    cfg, p = char_setup()
    rep = tc.check_gradient(lambda emb, W, b: tc.sum(char_cnn_nodes(["abc", "d", "badc"], cfg,
                                                                    {"emb": emb, "W": W, "b": b})),
                            dict(p, b=np.full(4, 0.3)))
    assert rep.passed, rep


# --------------------------------------------------------------- dropout

def test_word_dropout():
    rng = np.random.default_rng(0)
    ids = np.array([5, 6, 0, 7])
    assert np.array_equal(word_dropout(ids, 0.0, rng), ids)
    assert word_dropout(ids, 1.0, rng).tolist() == [UNK_ID, UNK_ID, PAD_ID, UNK_ID]
    big = np.arange(2, 10_002)
    frac = (word_dropout(big, 0.1, np.random.default_rng(1)) == UNK_ID).mean()
    assert 0.08 <= frac <= 0.12
    with pytest.raises(ValueError):
        word_dropout(ids, 1.5, rng)
