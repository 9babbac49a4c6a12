import numpy as np
import pytest

from energybench.datamodel import ColumnSpec, Dataset

ACCEPTANCE_DESCRIPTIONS = {
    "c01": "SHAP local accuracy on 500 random (GBT, record) pairs",
    "c02": "tree SHAP equals subset-enumeration oracle (50 GBTs, 1e-8)",
    "c03": "interaction matrix symmetry, row sums, additive off-diagonals",
    "c04": "WLS matches normal-equations oracle; weight-rescale invariance",
    "c05": "direction check: MLRi2 over MLR, GBT depth-3 NRMSE <= MLR",
    "c06": "gamma calibration recovery, monotone scores, median scores 50",
    "c07": "metric golden values exact to 1e-10",
    "c08": "GBT monotone training RMSE and depth-bound paths",
    "c09": "compare determinism and parallel==serial grid search",
    "c10": "interaction-expansion counts and budget boundary",
    "c11": "optional CBECS office MLRi2 check (skipped without data)",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"),
                          ("error", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_c" not in nodeid:
                continue
            key = nodeid.split("::test_")[-1].split("_")[0]
            if key in ACCEPTANCE_DESCRIPTIONS:
                rows[key] = label
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for key in sorted(ACCEPTANCE_DESCRIPTIONS):
        if key in rows:
            terminalreporter.write_line(
                f"criterion {int(key[1:]):>2}: {rows[key]:4} {ACCEPTANCE_DESCRIPTIONS[key]}")


def numeric_dataset(columns: dict, target: str | None = None,
                    weight: str | None = None, keys: tuple = ()) -> Dataset:
    """Build a Dataset of numeric columns with the given roles."""
    schema = []
    for name in columns:
        role = "predictor"
        if name == target:
            role = "target"
        elif name == weight:
            role = "weight"
        elif name in keys:
            role = "key"
        schema.append(ColumnSpec(name=name, kind="numeric", role=role))
    return Dataset(schema, {k: np.asarray(v, dtype=float) for k, v in columns.items()})


@pytest.fixture
def office_like():
    """Small synthetic table shaped like an office peer group."""
    rng = np.random.default_rng(2024)
    n = 120
    gfa = rng.uniform(500, 20000, n)
    hours = rng.uniform(40, 168, n)
    workers = rng.uniform(5, 400, n)
    energy = 40 * gfa + 900 * hours + 250 * workers + rng.normal(0, 5000, n)
    return numeric_dataset(
        {"GFA": gfa, "OpenHours": hours, "WorkersCnt": workers, "SourceEnergy": energy},
        target="SourceEnergy")
