import pytest
from hypothesis import given, strategies as st

from execaudit.values import (
    INT64_MAX, INT64_MIN, canon, decode, decode_name, encode, encode_name, render,
    same, wrap_int64,
)

scalars = st.one_of(st.none(), st.booleans(), st.integers(INT64_MIN, INT64_MAX), st.text())


@given(scalars)
def test_encode_roundtrip(v):
    assert same(decode(encode(v)), v)
    assert " " not in encode(v)


@given(st.text(min_size=1))
def test_name_roundtrip(s):
    tok = encode_name(s)
    assert decode_name(tok) == s
    assert " " not in tok and "=" not in tok


def test_bool_and_int_are_distinct():
    assert not same(True, 1)
    assert not same(0, False)
    assert canon(("a", 1)) != canon(("a", True))


def test_render():
    assert render(None) == ""
    assert render(True) == "true"
    assert render(-4) == "-4"


@given(st.integers())
def test_wrap_int64_in_range(v):
    w = wrap_int64(v)
    assert INT64_MIN <= w <= INT64_MAX
    assert (w - v) % 2**64 == 0


@pytest.mark.parametrize("tok", ["", "x", "i:abc", "b:2", "i:" + str(2**63)])
def test_decode_rejects_garbage(tok):
    with pytest.raises(ValueError):
        decode(tok)
