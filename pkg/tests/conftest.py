import pytest

from asyncbev.ingest import write_log
from asyncbev.sensors import SensorConfig, capture_all
from asyncbev.worldsim import make_scenario


@pytest.fixture(scope="session")
def small_scenario():
    # 3.2 s -> 7 keyframes, enough to drop two and keep a ladder's worth
    return make_scenario(seed=21, duration_s=3.2, n_agents=3)


@pytest.fixture(scope="session")
def small_records(small_scenario):
    return capture_all(small_scenario, SensorConfig())


@pytest.fixture()
def small_log_dir(tmp_path, small_scenario, small_records):
    log_dir = tmp_path / "log"
    write_log(small_records, small_scenario, log_dir)
    return log_dir
