import pytest

from scottsemi.tf import TFAtom, solve_tf_universal


@pytest.fixture(scope="session")
def universal():
    return solve_tf_universal()


@pytest.fixture(scope="session")
def atom1(universal):
    return TFAtom(1.0, universal)


@pytest.fixture(scope="session")
def scott_z1(atom1):
    """Default-sweep Scott report for z = 1 and its wall time (computed once)."""
    import time

    from scottsemi.scott import DEFAULT_SWEEP, scott_fit

    start = time.perf_counter()
    report = scott_fit(1.0, DEFAULT_SWEEP, atom=atom1)
    return report, time.perf_counter() - start
