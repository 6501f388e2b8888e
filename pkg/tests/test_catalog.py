import json

import numpy as np
import pytest

from nilpw.catalog import (
    PRESETS,
    UnknownGroupError,
    get_group,
    load_group_file,
    oracle_representation,
    resolve_group,
    validate_bundle,
)
from nilpw.lie import AlgebraError


def test_presets_validate(bundle):
    validate_bundle(bundle)
    d = bundle.describe()
    assert d["name"] == bundle.name and d["dim"] == bundle.n
    json.dumps(d)


@pytest.mark.parametrize("name, k", [("abelian1", 1), ("abelian2", 2), ("heisenberg", 1), ("engel", 2)])
def test_chart_dimensions(name, k):
    assert get_group(name).chart.k == k


def test_unknown_group_lists_presets():
    with pytest.raises(UnknownGroupError) as err:
        resolve_group("lorentz")
    for p in PRESETS:
        assert p in str(err.value)


def test_load_group_file(tmp_path):
    spec = {
        "name": "heis-copy",
        "dim": 3,
        "brackets": [[0, 1, [0, 0, 1]]],
        "chart": {"k": 1, "embedMatrix": [[0, 0, 1]]},
    }
    path = tmp_path / "g.json"
    path.write_text(json.dumps(spec))
    b = resolve_group(str(path))
    assert b.name == "heis-copy"
    assert np.array_equal(b.sc.c, get_group("heisenberg").sc.c)
    assert b.density([2.0]) == pytest.approx(2.0)


def test_group_file_with_wrong_chart_dimension(tmp_path):
    spec = {"dim": 3, "brackets": [[0, 1, [0, 0, 1]]],
            "chart": {"k": 2, "embedMatrix": [[0, 0, 1], [1, 0, 0]]}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(spec))
    with pytest.raises(AlgebraError, match="chart k=2"):
        load_group_file(path)


def test_heisenberg_oracle_identity():
    b = get_group("heisenberg")
    phase, shifted = oracle_representation(b, 1.3, [0, 0, 0], np.array([0.5, -1.0]))
    assert np.allclose(phase, 1) and np.allclose(shifted, [0.5, -1.0])


def test_engel_has_no_oracle():
    with pytest.raises(LookupError):
        oracle_representation(get_group("engel"), [1, 0], np.zeros(4), 0.0)
