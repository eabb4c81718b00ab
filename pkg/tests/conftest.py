import pytest

from rejectgate.cost_core import CostModel, Dataset


def make_dataset(pairs, groups=None, logits=None):
    """Dataset from (confidence, correct) pairs with ids r0, r1, ..."""
    return Dataset(
        ids=[f"r{i}" for i in range(len(pairs))],
        confidence=[c for c, _ in pairs],
        correct=[bool(y) for _, y in pairs],
        group=groups,
        logit=logits,
    )


@pytest.fixture
def d4():
    return Dataset(ids=["a", "b", "c", "d"], confidence=[0.9, 0.6, 0.7, 0.2], correct=[True, False, True, False])


@pytest.fixture
def cost3():
    return CostModel.normalized(3)


D4_CSV = "id,confidence,correct\na,0.9,true\nb,0.6,false\nc,0.7,1\nd,0.2,0\n"


@pytest.fixture
def d4_csv(tmp_path):
    path = tmp_path / "d4.csv"
    path.write_text(D4_CSV)
    return path


# --- acceptance summary ------------------------------------------------------

_criteria = pytest.StashKey[list]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config.stash.setdefault(_criteria, []).append((*marker.args, report.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_criteria, None)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"AC{number:<3} {'PASS' if passed else 'FAIL'}  {title}  [{detail}]")
