import json
from collections import Counter

import pytest

from flowforge.dataset import DIFFICULTY_BANDS, DuplicateInstanceId, SchemaError, load_dataset, parse_instance
from flowforge.tools import CATEGORIES


def test_desk_shape(desk):
    assert len(desk) >= 12
    per = Counter(i.category for i in desk)
    assert set(per) == set(CATEGORIES) and min(per.values()) >= 3
    for inst in desk:
        lo, hi = DIFFICULTY_BANDS[inst.difficulty]
        assert lo <= len(inst.toolset) <= hi
        assert inst.tests and inst.golden_graph is not None


def test_query_lists_examples(desk_by_id):
    q = desk_by_id["data_sum_list"].query()
    assert q.startswith(desk_by_id["data_sum_list"].description)
    assert "Examples:" in q and "-> Expected output:" in q


def doc_of(desk_by_id, name="data_sum_list"):
    from flowforge.dataset import DESK_PATH
    return json.loads((DESK_PATH / f"{name}.json").read_text())


def test_missing_tests_field(desk_by_id):
    doc = doc_of(desk_by_id)
    del doc["tests"]
    with pytest.raises(SchemaError) as err:
        parse_instance(doc)
    assert err.value.path == "$.tests"


@pytest.mark.parametrize("field,value", [("category", "poetry"), ("difficulty", "brutal"), ("tests", []),
                                         ("toolset", ["no_such_tool"])])
def test_bad_fields(desk_by_id, field, value):
    doc = doc_of(desk_by_id)
    doc[field] = value
    with pytest.raises(SchemaError):
        parse_instance(doc)


def test_duplicate_ids(tmp_path, desk_by_id):
    doc = doc_of(desk_by_id)
    for name in ("a.json", "b.json"):
        (tmp_path / name).write_text(json.dumps(doc))
    (tmp_path / "index.json").write_text(json.dumps({"instances": ["a.json", "b.json"]}))
    with pytest.raises(DuplicateInstanceId):
        load_dataset(tmp_path)


def test_missing_index(tmp_path):
    with pytest.raises(SchemaError):
        load_dataset(tmp_path)
