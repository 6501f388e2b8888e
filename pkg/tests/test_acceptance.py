"""One test per acceptance criterion; tolerances and time budgets live in nilpw.acceptance."""
import pytest

from nilpw.acceptance import CHECKS, format_line

NAMES = {
    1: "abelian_fft",
    2: "route_equivalence",
    3: "representation_laws",
    4: "heisenberg_oracle",
    5: "plancherel_ratio",
    6: "paley_wiener_scan",
    7: "algebra_layer",
    8: "engel_density",
    9: "determinism",
}


@pytest.mark.parametrize("number", sorted(CHECKS), ids=[f"{n}-{NAMES[n]}" for n in sorted(CHECKS)])
def test_acceptance(number, acceptance_log):
    result = CHECKS[number](seed=2024)
    line = format_line(result)
    print(line)
    acceptance_log.append((number, line))
    assert result.passed, line
