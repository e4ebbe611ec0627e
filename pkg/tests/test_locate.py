import numpy as np
import pytest

from src.errors import CropTooLarge, InvalidSize, RangeError
from src.models import GazeRecord, Image, PixelPoint
from src.skills.locate_skill import CropSpec, LocateSkill, greenness
from src.skills.synthesis_skill import SynthesisSkill, SyntheticSessionSpec

from .helpers import solid


@pytest.fixture
def locate():
    return LocateSkill(CropSpec(size=128, resize_to=224))


def _bilinear_oracle(pixels, side):
    """Per-pixel evaluation of the half-pixel-centre bilinear formula"""
    h, w = pixels.shape[:2]
    out = np.zeros((side, side, 3))
    for oy in range(side):
        sy = min(max((oy + 0.5) * (h / side) - 0.5, 0.0), h - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for ox in range(side):
            sx = min(max((ox + 0.5) * (w / side) - 0.5, 0.0), w - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            left = pixels[y0, x0] * (1 - fy) + pixels[y1, x0] * fy
            right = pixels[y0, x1] * (1 - fy) + pixels[y1, x1] * fy
            out[oy, ox] = left * (1 - fx) + right * fx
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


class TestFindGazeDot:
    def test_unique_maximum(self, locate):
        px = np.zeros((10, 12, 3), dtype=np.uint8)
        px[5, 7] = (0, 255, 0)
        point = locate.find_gaze_dot(Image(pixels=px))
        assert (point.x, point.y) == (7, 5)

    def test_ties_go_to_first_in_row_major_order(self, locate):
        px = np.zeros((10, 10, 3), dtype=np.uint8)
        px[9, 0] = (0, 255, 0)
        px[1, 0] = (0, 255, 0)
        assert locate.find_gaze_dot(Image(pixels=px)) == PixelPoint(x=0, y=1)

    def test_matches_exhaustive_scan(self, locate, rng):
        for _ in range(5):
            px = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
            best, best_score = None, None
            for y in range(64):
                for x in range(64):
                    r, g, b = (int(v) for v in px[y, x])
                    score = 2 * g - r - b
                    if best_score is None or score > best_score:
                        best, best_score = (x, y), score
            point = locate.find_gaze_dot(Image(pixels=px))
            assert (point.x, point.y) == best

    def test_translated_dot_moves_with_the_frame(self, locate, rng):
        patch = rng.integers(0, 100, size=(9, 9, 3), dtype=np.uint8)
        patch[4, 4] = (0, 255, 0)
        for _ in range(20):
            dx, dy = int(rng.integers(0, 41)), int(rng.integers(0, 31))
            px = np.zeros((40, 50, 3), dtype=np.uint8)
            px[dy:dy + 9, dx:dx + 9] = patch
            assert locate.find_gaze_dot(Image(pixels=px)) == PixelPoint(x=dx + 4, y=dy + 4)

    def test_greenness_does_not_overflow(self):
        px = np.array([[[0, 255, 0], [255, 0, 255]]], dtype=np.uint8)
        np.testing.assert_array_equal(greenness(px), [[510, -510]])


class TestResolveGaze:
    def test_detector_without_log(self, locate):
        img = solid(20, 20, (0, 0, 0))
        px = img.pixels.copy()
        px[3, 4] = (0, 255, 0)
        assert locate.resolve_gaze(Image(pixels=px)) == PixelPoint(x=4, y=3)

    def test_logged_point_wins(self, locate):
        img = solid(20, 20, (0, 0, 0))
        record = GazeRecord(frame_index=0, timestamp_ms=0, x=11, y=2, valid=True)
        assert locate.resolve_gaze(img, record) == PixelPoint(x=11, y=2)

    def test_invalid_record(self, locate):
        record = GazeRecord(frame_index=0, timestamp_ms=0, x=0, y=0, valid=False)
        assert locate.resolve_gaze(solid(4, 4, (1, 1, 1)), record) is None

    def test_logged_point_outside_frame(self, locate):
        record = GazeRecord(frame_index=0, timestamp_ms=0, x=40, y=0, valid=True)
        with pytest.raises(RangeError):
            locate.resolve_gaze(solid(20, 20, (0, 0, 0)), record)


class TestEraseOverlay:
    def test_restores_the_plain_frame(self, locate):
        synthesis = SynthesisSkill()
        spec = SyntheticSessionSpec(n_frames=5, seed=11)
        with_dot = synthesis.generate_synthetic_session(spec)
        without_dot = synthesis.generate_synthetic_session(spec.model_copy(update={"render_dot": False}))
        for index in range(5):
            frame = with_dot.frame(index)
            erased = locate.erase_overlay(frame, locate.find_gaze_dot(frame))
            np.testing.assert_array_equal(erased.pixels, without_dot.frame(index).pixels)

    def test_no_overlay_returns_same_image(self, locate):
        img = solid(30, 30, (200, 10, 10))
        assert locate.erase_overlay(img, PixelPoint(x=15, y=15)) is img

    def test_disabled(self):
        img = solid(30, 30, (0, 255, 0))
        assert LocateSkill(overlay_radius=0).erase_overlay(img, PixelPoint(x=1, y=1)) is img


class TestCrop:
    def test_interior_window(self, locate):
        px = np.zeros((1080, 1920, 3), dtype=np.uint8)
        px[476, 896] = (255, 0, 0)
        px[603, 1023] = (0, 0, 255)
        crop = locate.crop_square(Image(pixels=px), PixelPoint(x=960, y=540))
        assert (crop.width, crop.height) == (128, 128)
        assert crop.pixel(0, 0) == (255, 0, 0)
        assert crop.pixel(127, 127) == (0, 0, 255)

    def test_corner_is_shifted_not_padded(self, locate):
        px = np.zeros((1080, 1920, 3), dtype=np.uint8)
        px[0, 0] = (9, 9, 9)
        px[1079, 1919] = (7, 7, 7)
        img = Image(pixels=px)
        assert locate.crop_square(img, PixelPoint(x=0, y=0)).pixel(0, 0) == (9, 9, 9)
        assert locate.crop_square(img, PixelPoint(x=1919, y=1079)).pixel(127, 127) == (7, 7, 7)

    def test_too_large(self, locate):
        with pytest.raises(CropTooLarge):
            locate.crop_square(solid(1920, 1080, (0, 0, 0)), PixelPoint(x=960, y=540), CropSpec(size=2048))

    def test_centre_outside(self, locate):
        with pytest.raises(RangeError):
            locate.crop_square(solid(200, 200, (0, 0, 0)), PixelPoint(x=200, y=5))

    def test_centre_always_inside_crop(self, locate, rng):
        img = Image(pixels=rng.integers(0, 256, size=(150, 170, 3), dtype=np.uint8))
        for _ in range(50):
            x, y = int(rng.integers(170)), int(rng.integers(150))
            size = int(rng.integers(2, 150))
            crop = locate.crop_square(img, PixelPoint(x=x, y=y), CropSpec(size=size))
            x0 = min(max(x - size // 2, 0), 170 - size)
            y0 = min(max(y - size // 2, 0), 150 - size)
            assert x0 <= x < x0 + size and y0 <= y < y0 + size
            assert crop.pixel(x - x0, y - y0) == img.pixel(x, y)


class TestResize:
    def test_uniform_preserved(self, locate):
        for side in (1, 7, 224):
            out = locate.resize_bilinear(solid(13, 5, (12, 34, 56)), side)
            assert (out.width, out.height) == (side, side)
            assert np.all(out.pixels == (12, 34, 56))

    def test_two_by_two_to_one_is_average(self, locate):
        px = np.array([[[0, 0, 0], [100, 100, 100]], [[200, 200, 200], [100, 100, 100]]], dtype=np.uint8)
        assert locate.resize_bilinear(Image(pixels=px), 1).pixel(0, 0) == (100, 100, 100)

    def test_gradient_matches_formula(self, locate):
        px = np.zeros((4, 4, 3), dtype=np.uint8)
        px[..., 0] = np.arange(16).reshape(4, 4) * 16
        px[..., 1] = np.arange(4)[None, :] * 60
        px[..., 2] = np.arange(4)[:, None] * 70
        out = locate.resize_bilinear(Image(pixels=px), 8)
        np.testing.assert_array_equal(out.pixels, _bilinear_oracle(px.astype(np.float64), 8))

    def test_invalid_side(self, locate):
        with pytest.raises(InvalidSize):
            locate.resize_bilinear(solid(2, 2, (0, 0, 0)), 0)

    def test_gaze_crop_shape(self, locate):
        out = locate.gaze_crop(solid(320, 240, (5, 5, 5)), PixelPoint(x=10, y=10))
        assert (out.width, out.height) == (224, 224)
