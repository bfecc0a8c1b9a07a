from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

#: acceptance results: criterion number → [(check, passed, detail)]
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record():
    """Register one check of an acceptance criterion; returns the verdict for asserting."""

    def _record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
        passed = bool(passed)
        ACCEPTANCE.setdefault(criterion, []).append((check, passed, detail))
        print(f"criterion {criterion} [{check}]: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failed = [c for c, ok, _ in checks if not ok]
        note = f"  (failing: {'; '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  [{len(checks)} checks]{note}")


@pytest.fixture(scope="session")
def data():
    from tnconv.counterexample import load_builtin

    return load_builtin()


@pytest.fixture(scope="session")
def built_timed(data):
    import time

    from tnconv.counterexample import build_integrand

    t0 = time.perf_counter()
    b = build_integrand(data)
    return b, time.perf_counter() - t0


@pytest.fixture(scope="session")
def built(built_timed):
    return built_timed[0]


@pytest.fixture(scope="session")
def model(built):
    from tnconv.extension import model_from_integrand

    return model_from_integrand(built)


@pytest.fixture(scope="session")
def gcal(model):
    from tnconv.extension import extend

    return extend(model)


@pytest.fixture(scope="session")
def xs_float(data):
    return [np.asarray(x, float) for x in data.X]


def rational_matrix(rng: np.random.Generator, n: int, m: int, den: int = 7, span: int = 9) -> list[list[Fraction]]:
    return [[Fraction(int(rng.integers(-span, span + 1)), int(rng.integers(1, den + 1))) for _ in range(m)] for _ in range(n)]


@pytest.fixture(scope="session")
def ladder():
    """Counterexample map refined round by round from the barycenter datum, depths 0..6.

    Each entry holds a shallow snapshot of the map, its analysis (with dyadic
    histograms) and the cumulative construction time in seconds.
    """
    import copy
    import time

    from tnconv import convint as ci

    chain, perm = ci.counterexample_chain()
    params = ci.StageParams(depth=6, chain=chain, periods=ci.DEFAULT_PERIODS)
    t0 = time.perf_counter()
    m = ci.initial_map(chain.barycenter(), chain=chain)
    out = {}
    for d in range(7):
        if d:
            m = ci.refine(m, params, stages=1)
        elapsed = time.perf_counter() - t0
        snap = ci.PiecewiseAffineMap(
            cells=[copy.copy(c) for c in m.cells], A0=m.A0, b0=m.b0, domain=m.domain, history=list(m.history)
        )
        out[d] = {"map": snap, "analysis": ci.analyze(m, params.targets, dyadic_depth=2), "seconds": elapsed}
    out["params"] = params
    out["perm"] = perm
    return out
