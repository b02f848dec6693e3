import numpy as np
import pytest
from PIL import Image

from components.logger import Logger
from components.tensor import precision


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """Send every log line to a per-test file and keep runs single-threaded."""
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "logs" / "curvelight.log"))
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    monkeypatch.delenv("CURVELIGHT_THREADS", raising=False)
    monkeypatch.delenv("CURVELIGHT_DEBUG", raising=False)
    Logger.reset()
    yield
    Logger.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    with precision("float64"):
        yield


def write_png(path, pixels):
    """Write an (H, W, 3) or (H, W) uint8 array as PNG."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")
    return path


@pytest.fixture
def image_dir(tmp_path):
    """Ten textured 20x20 images plus one undecodable file."""
    directory = tmp_path / "images"
    generator = np.random.default_rng(7)
    for index in range(10):
        level = 30 if index % 2 else 200
        pixels = np.clip(generator.normal(level, 25, size=(20, 20, 3)), 0, 255)
        write_png(directory / f"img{index:02d}.png", pixels)
    (directory / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
    return directory
