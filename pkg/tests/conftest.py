import pytest

from scenesed import kernels


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test once per kernel backend."""
    previous = kernels.active_backend()
    try:
        kernels.use_backend(request.param)
    except ImportError:
        pytest.skip("numba not available")
    yield request.param
    kernels.use_backend(previous)
