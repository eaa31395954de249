import pytest
from hypothesis import given, strategies as st

from execaudit.objects import (
    DB_OP, KV_GET, KV_SET, MalformedOp, Query, RegisterObject, TableStoreObject,
    KvStoreObject, fresh_object,
)


def test_register_sequence_numbers():
    r = RegisterObject("A")
    assert r.apply("RegisterRead", ()) is None
    r.apply("RegisterWrite", (4,))
    assert r.apply("RegisterRead", ()) == 4
    assert r.seq == 3
    with pytest.raises(MalformedOp):
        r.apply(KV_GET, ("k",))


def test_kv():
    kv = KvStoreObject()
    kv.apply(KV_SET, ("a", 1))
    assert kv.apply(KV_GET, ("a",)) == 1
    assert kv.apply(KV_GET, ("b",)) is None


def test_table_semantics():
    db = TableStoreObject()
    db.apply(DB_OP, (Query("insert", "t", pk=1, row=(("v", 5),)),
                     Query("update", "t", pk=2, col="v", val=1),
                     Query("insert", "t", pk=1, row=(("v", 6),))))
    sel = Query("select", "t", col="v", cmp="lt", val=10)
    assert db.execute(sel) == ((1, (("v", 6),)),)
    db.execute(Query("delete", "t", pk=1))
    assert db.execute(sel) == ()
    assert db.execute(Query("select", "nope", col="pk", cmp="eq", val=1)) == ()


@pytest.mark.parametrize("kw", [
    dict(kind="drop", table="t"),
    dict(kind="insert", table="t", pk="x"),
    dict(kind="select", table="t", col="v", cmp="gt", val=1),
    dict(kind="update", table="t", pk=1, col="pk", val=1),
    dict(kind="insert", table="", pk=1),
])
def test_bad_queries(kw):
    with pytest.raises(ValueError):
        Query(**kw)


vals = st.one_of(st.none(), st.booleans(), st.integers(-10, 10), st.text(max_size=3))


@given(st.sampled_from(["insert", "update", "select", "delete"]), st.integers(-5, 5), vals,
       st.sampled_from(["eq", "lt"]))
def test_query_json_roundtrip(kind, pk, val, cmp):
    if kind == "insert":
        q = Query(kind, "t", pk=pk, row=(("a", val),))
    elif kind == "update":
        q = Query(kind, "t", pk=pk, col="a", val=val)
    elif kind == "select":
        q = Query(kind, "t", col="a", cmp=cmp, val=val)
    else:
        q = Query(kind, "t", pk=pk)
    assert Query.from_json(q.to_json()) == q
    assert hash(Query.from_json(q.to_json())) == hash(q)


def test_fresh_object_ids():
    assert isinstance(fresh_object("reg:x"), RegisterObject)
    with pytest.raises(MalformedOp):
        fresh_object("disk")
