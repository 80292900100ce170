import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

FIXTURES = ROOT / "tests" / "fixtures"


@pytest.fixture(autouse=True)
def isolated_home(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    home = tmp_path / "home"
    monkeypatch.setenv("RISKBENCH_HOME", str(home))
    monkeypatch.delenv("RISKBENCH_MASTER_ADDR", raising=False)
    return home


def write_sleep_jobs(directory: Path, durations: list[float]) -> list[Path]:
    """One VanillaCall file per duration, priced by the sleeping pricer."""
    from riskbench.core import codec
    from riskbench.core.models import ProblemKind, ProblemSpec

    paths = []
    for index, duration in enumerate(durations):
        spec = ProblemSpec(
            id=f"VanillaCall_{index}",
            kind=ProblemKind.VANILLA_CALL,
            strike=100.0 + index,
            maturity=1.0,
            method_params={"simulated_duration": duration},
        )
        path = directory / f"{spec.id}.rbp"
        codec.save(path, spec)
        paths.append(path)
    return paths
