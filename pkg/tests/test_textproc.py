from __future__ import annotations

from hypothesis import given, strategies as st

from ragintent.textproc import TokenizerConfig, light_stem, normalize, tokenize, whitespace_tokens


def test_normalize_examples():
    assert normalize("  Track   ORDER ") == "track order"
    assert normalize("") == ""
    assert normalize("a\t\nb") == "a b"


def test_tokenize_example():
    assert tokenize("where's my order #123?").tokens == ("where", "s", "my", "order", "123")
    assert tokenize("").tokens == ()


def test_underscore_splits():
    assert tokenize("foo_bar").tokens == ("foo", "bar")


def test_non_ascii_letters_kept():
    assert tokenize("Ça coûte 5€").tokens == ("ça", "coûte", "5")


@given(st.text())
def test_normalize_idempotent(s):
    assert normalize(normalize(s)) == normalize(s)


@given(st.text())
def test_tokenize_of_normalized_is_same(s):
    assert tokenize(normalize(s)).tokens == tokenize(s).tokens


@given(st.text())
def test_token_bound_and_no_empty_tokens(s):
    ts = tokenize(s)
    assert len(ts) <= len(s)
    assert all(ts.tokens)
    assert ts.source_len == len(s)


def test_opt_in_extras_off_by_default():
    assert tokenize("the orders are shipping").tokens == ("the", "orders", "are", "shipping")
    cfg = TokenizerConfig(stem=True, drop_stopwords=True)
    assert tokenize("the orders are shipping", cfg).tokens == ("order", "shipp")
    assert light_stem("is") == "is"


def test_whitespace_tokens():
    assert whitespace_tokens("  Order  Issue > Track ") == ["order", "issue", ">", "track"]
