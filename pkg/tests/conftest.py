"""Shared scenarios and cached pipeline stages."""

from pathlib import Path

import pytest

from bbmsoliton.phase import solve_phase
from bbmsoliton.regular import solve_u0, solve_u1
from bbmsoliton.scenario import load_scenario_file, scenario_from_mapping
from bbmsoliton.singular import SolitonCore

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def constant_scenario(**kw):
    doc = dict(a0="1", b0="1", c0="1", u0_init="0", phi0=0.0, dphi0=2.0)
    doc.update(kw)
    return scenario_from_mapping(doc)


@pytest.fixture(scope="session")
def constant():
    return constant_scenario()


@pytest.fixture(scope="session")
def benchmark():
    return load_scenario_file(SCENARIOS / "benchmark.toml")


class Stages:
    def __init__(self, s):
        self.s = s
        self.tab = s.coefficients.table()
        self.u0 = solve_u0(s, tab=self.tab)
        self.u1 = solve_u1(s, self.u0, tab=self.tab)
        self.curve = solve_phase(s, self.u0, tab=self.tab)
        self.core = SolitonCore(self.curve, self.u0, self.tab, s.C0)


@pytest.fixture(scope="session")
def constant_stages(constant):
    return Stages(constant)


@pytest.fixture(scope="session")
def bench_stages(benchmark):
    return Stages(benchmark)


@pytest.fixture(scope="session")
def bench_solution(benchmark):
    from bbmsoliton.assemble import build_solution

    return build_solution(benchmark, 1, "auto")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance")
        for line in sorted(mod.LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
