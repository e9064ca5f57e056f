import numpy as np
import pytest
from hypothesis import settings

from lidarsynth.body_model import gen_toy_model, save_body_model
from lidarsynth.pipeline import GenConfig, gen_pose_db, save_pose_db, synth

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def toy_model():
    return gen_toy_model(0)


@pytest.fixture(scope="session")
def model_files(tmp_path_factory, toy_model):
    root = tmp_path_factory.mktemp("inputs")
    model_path, pose_path = root / "toy.lbm", root / "poses.bin"
    save_body_model(toy_model, model_path)
    save_pose_db(pose_path, gen_pose_db(200, seed=3))
    return str(model_path), str(pose_path)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, model_files):
    out = tmp_path_factory.mktemp("ds") / "d"
    cfg = GenConfig(*model_files, count=40, seed=11)
    synth(cfg, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
