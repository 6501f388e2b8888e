import json

import numpy as np
import pytest

from nilpw.runner import Interrupted, SlotStore, config_digest, slot_map


def square(i):
    return np.arange(3.0) * i**2


def test_slot_map_order_independent_of_workers():
    a = slot_map(square, 9, workers=1)
    b = slot_map(square, 9, workers=4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_resume_after_interrupt(tmp_path):
    calls = []

    def f(i):
        calls.append(i)
        return square(i)

    store = SlotStore(tmp_path, "abc", 6)
    with pytest.raises(Interrupted):
        slot_map(f, 6, store=store, stop_after=4)
    assert sorted(json.loads((tmp_path / "manifest.json").read_text())["completed"]) == [0, 1, 2, 3]
    calls.clear()
    out = slot_map(f, 6, workers=3, store=SlotStore(tmp_path, "abc", 6))
    assert sorted(calls) == [4, 5]
    assert all(np.array_equal(o, square(i)) for i, o in enumerate(out))


def test_stale_manifest_is_discarded(tmp_path):
    slot_map(square, 3, store=SlotStore(tmp_path, "one", 3))
    store = SlotStore(tmp_path, "two", 3)
    assert store.completed == set()


def test_missing_slot_file_is_recomputed(tmp_path):
    slot_map(square, 3, store=SlotStore(tmp_path, "d", 3))
    (tmp_path / "slot_00001.npy").unlink()
    assert SlotStore(tmp_path, "d", 3).completed == {0, 2}


def test_config_digest_is_key_order_independent():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})
