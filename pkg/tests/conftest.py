import os
import random

import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
GOLDEN_DIR = os.path.join(DATA_DIR, "goldens")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(num, title): end-to-end guarantee, reported as one pass/fail line")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, title = marker.args
    verdict = "PASS" if report.passed else "FAIL"
    reporter = item.config.pluginmanager.getplugin("terminalreporter")
    if reporter is not None:  # absent under xdist workers and programmatic runs
        reporter.write_line(f"acceptance {num:2d} {title}: {verdict}")


def golden(name: str) -> str:
    """Golden file contents with the single file-final newline stripped."""
    with open(os.path.join(GOLDEN_DIR, name), encoding="utf-8", newline="") as f:
        text = f.read()
    assert text.endswith("\n"), name
    return text[:-1]


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


_WORDS = (
    "yang dan di ke dari untuk pada dengan ini itu kami mereka saya tidak "
    "boleh sudah akan ada harga pasar sekolah kereta makan minum jalan rumah "
    "besar kecil baru lama air nasi ayam ikan kampung bandar negeri tahun "
    "hari bulan orang anak ibu bapa guru murid buku kerja wang masa"
).split()


def random_words(rng: random.Random, n: int) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(n))


@pytest.fixture
def rng():
    return random.Random(1234)
