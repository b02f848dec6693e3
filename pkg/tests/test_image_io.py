import numpy as np
import png
import pytest
from PIL import Image

from components import image_io
from components.image_io import CorruptImageError, ImageIOError, UnsupportedFormatError
from tests.conftest import write_png


class TestLoad:
    def test_binary_ppm(self, tmp_path):
        path = tmp_path / "pixel.ppm"
        path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 128]))
        img = image_io.load(path)
        assert img.shape == (3, 1, 1) and img.dtype == np.float32
        np.testing.assert_allclose(img[:, 0, 0], [1.0, 0.0, 128 / 255], atol=1e-7)

    def test_black_png(self, tmp_path):
        img = image_io.load(write_png(tmp_path / "black.png", np.zeros((1, 1, 3))))
        np.testing.assert_array_equal(img, np.zeros((3, 1, 1)))

    def test_gray_is_replicated(self, tmp_path):
        img = image_io.load(write_png(tmp_path / "gray.png", np.array([[0, 51], [102, 255]])))
        assert img.shape == (3, 2, 2)
        np.testing.assert_array_equal(img[0], img[2])
        assert img[0, 0, 1] == pytest.approx(0.2)

    def test_sixteen_bit_gray(self, tmp_path):
        path = tmp_path / "deep.png"
        Image.fromarray(np.array([[65535, 0], [32768, 1]], dtype=np.uint16)).save(path, format="PNG")
        img = image_io.load(path)
        np.testing.assert_allclose(img[1], [[1.0, 0.0], [32768 / 65535, 1 / 65535]], atol=1e-7)

    def test_sixteen_bit_rgb(self, tmp_path):
        path = tmp_path / "deep_rgb.png"
        with open(path, "wb") as handle:
            png.Writer(1, 1, greyscale=False, bitdepth=16).write(handle, [[128, 32768, 65535]])
        img = image_io.load(path)
        np.testing.assert_allclose(img[:, 0, 0], np.array([128, 32768, 65535]) / 65535, atol=1e-7)

    def test_sixteen_bit_rgba_drops_alpha(self, tmp_path):
        path = tmp_path / "deep_rgba.png"
        rows = [[1000, 2000, 3000, 0, 65535, 0, 257, 65535]]
        with open(path, "wb") as handle:
            png.Writer(2, 1, greyscale=False, alpha=True, bitdepth=16).write(handle, rows)
        img = image_io.load(path)
        assert img.shape == (3, 1, 2)
        np.testing.assert_allclose(img[:, 0, 0], np.array([1000, 2000, 3000]) / 65535, atol=1e-7)
        np.testing.assert_allclose(img[:, 0, 1], np.array([65535, 0, 257]) / 65535, atol=1e-7)

    def test_alpha_is_dropped(self, tmp_path):
        path = tmp_path / "rgba.png"
        Image.fromarray(np.full((2, 2, 4), [10, 20, 30, 0], dtype=np.uint8)).save(path, format="PNG")
        img = image_io.load(path)
        assert img.shape == (3, 2, 2)
        np.testing.assert_allclose(img[:, 0, 0], np.array([10, 20, 30]) / 255, atol=1e-7)

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "notes.png"
        path.write_text("just text", encoding="utf-8")
        with pytest.raises(UnsupportedFormatError):
            image_io.load(path)

    def test_corrupt_png(self, tmp_path):
        path = tmp_path / "cut.png"
        data = write_png(tmp_path / "full.png", np.full((8, 8, 3), 90)).read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(CorruptImageError):
            image_io.load(path)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            image_io.load(tmp_path / "absent.png")

    def test_random_bytes_never_escape_as_other_errors(self, tmp_path):
        generator = np.random.default_rng(0)
        path = tmp_path / "fuzz.png"
        for index in range(60):
            prefix = [b"", image_io.PNG_SIGNATURE, b"P6\n"][index % 3]
            path.write_bytes(prefix + generator.integers(0, 256, size=int(generator.integers(0, 200)),
                                                         dtype=np.uint8).tobytes())
            try:
                img = image_io.load(path)
            except ImageIOError:
                continue
            assert img.ndim == 3 and img.shape[0] == 3
            assert img.min() >= 0.0 and img.max() <= 1.0


class TestSave:
    def test_quantization_round_half_up(self):
        np.testing.assert_array_equal(image_io.quantize(np.array([0.0, 0.5, 1.0, 1.4, -0.2, 0.25])),
                                      [0, 128, 255, 255, 0, 64])

    def test_round_trip(self, tmp_path, rng):
        img = rng.uniform(size=(3, 9, 7)).astype(np.float32)
        once = image_io.load(image_io.save(img, tmp_path / "once.png"))
        assert np.max(np.abs(once - img)) <= 1 / 510 + 1e-7
        twice = image_io.load(image_io.save(once, tmp_path / "twice.ppm"))
        np.testing.assert_array_equal(twice, once)

    def test_full_white(self, tmp_path):
        path = image_io.save(np.ones((3, 2, 2)), tmp_path / "white.png")
        with Image.open(path) as saved:
            assert saved.mode == "RGB"
            assert np.all(np.asarray(saved) == 255)

    def test_accepts_a_single_item_batch(self, tmp_path):
        path = image_io.save(np.zeros((1, 3, 2, 2)), tmp_path / "batch.png")
        assert image_io.load(path).shape == (3, 2, 2)

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(UnsupportedFormatError):
            image_io.save(np.zeros((3, 2, 2)), tmp_path / "out.jpg")

    def test_grayscale_maps(self, tmp_path):
        flat = image_io.load(image_io.save_grayscale(np.full((3, 3), 0.7), tmp_path / "flat.png"))
        np.testing.assert_array_equal(flat, np.zeros((3, 3, 3)))
        ramp = image_io.load(image_io.save_grayscale(np.array([[-1.0, 0.0, 1.0]]), tmp_path / "ramp.png"))
        np.testing.assert_allclose(ramp[0, 0], [0.0, 128 / 255, 1.0], atol=1e-7)


class TestHelpers:
    def test_resize_keeps_range(self, rng):
        img = rng.uniform(size=(3, 20, 30)).astype(np.float32)
        out = image_io.resize(img, 7, 11)
        assert out.shape == (3, 7, 11)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_list_images_is_sorted_and_filtered(self, tmp_path):
        for name in ("b.png", "a.PPM", "c.txt", "d.jpg"):
            (tmp_path / name).write_bytes(b"")
        assert [p.name for p in image_io.list_images(tmp_path)] == ["a.PPM", "b.png"]

    def test_batches(self, rng):
        images = [rng.uniform(size=(3, 4, 4)) for _ in range(3)]
        batch = image_io.to_batch(images)
        assert batch.shape == (3, 3, 4, 4)
        assert len(image_io.from_batch(batch)) == 3
