import pytest

from flowpinn import cli

# a tiny but structurally complete run: all 12 designs, full [0, 6] span,
# coarse grid and ROI so the whole pipeline stays fast
MICRO_OVERRIDES = [
    "solver.nx=90", "solver.ny=20", "solver.dt=0.002", "solver.roi_spacing=0.15",
]


def micro_args(extra=()):
    args = []
    for item in MICRO_OVERRIDES + list(extra):
        args.extend(["--set", item])
    return args


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """Generated micro dataset shared across CLI tests."""
    out = tmp_path_factory.mktemp("micro_run")
    rc = cli.main(["generate", "--out", str(out)] + micro_args())
    assert rc == 0
    return out
