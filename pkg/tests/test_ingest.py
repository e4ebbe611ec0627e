import numpy as np
import pytest

from src.errors import EmptyInput, EmptyLabels, FormatError, InvalidInput, OrderError, RangeError, TaxonomyError
from src.models import GazeRecord, Image
from src.skills.ingest_skill import (DirectoryFrameSource, IngestSkill, SplitManifest, frame_filename, read_image,
                                     write_image)

from .helpers import solid, timeline

HEADER = "frame,timestamp_ms,x,y,valid\n"


@pytest.fixture
def ingest(taxonomy):
    return IngestSkill(taxonomy, frame_size=(1920, 1080))


class TestGazeLog:
    def test_single_row(self, ingest):
        records = ingest.parse_gaze_log(HEADER + "0,0,960,540,1")
        assert records == [GazeRecord(frame_index=0, timestamp_ms=0, x=960, y=540, valid=True)]

    def test_non_monotonic_frames_report_row(self, ingest):
        with pytest.raises(OrderError) as err:
            ingest.parse_gaze_log(HEADER + "0,0,1,1,1\n2,80,1,1,1\n1,40,1,1,1\n")
        assert err.value.row == 3
        assert "row 3" in str(err.value)

    def test_missing_header(self, ingest):
        with pytest.raises(FormatError):
            ingest.parse_gaze_log("0,0,960,540,1\n")

    def test_out_of_frame_valid_row(self, ingest):
        with pytest.raises(RangeError):
            ingest.parse_gaze_log(HEADER + "0,0,1920,10,1\n")

    def test_out_of_frame_invalid_row_is_accepted(self, ingest):
        records = ingest.parse_gaze_log(HEADER + "0,0,-1,-1,0\n")
        assert records[0].valid is False

    def test_fractional_coordinates_round(self, ingest):
        record = ingest.parse_gaze_log(HEADER + "0,0,10.5,3.4,true\n")[0]
        assert (record.x, record.y) == (11, 3)

    def test_malformed_row(self, ingest):
        with pytest.raises(FormatError) as err:
            ingest.parse_gaze_log(HEADER + "0,0,1,1,1\n1,40,abc,1,1\n")
        assert err.value.row == 2

    def test_synthetic_log_round_trips_at_25_fps(self, ingest, small_session):
        text = ingest.serialize_gaze_log(small_session.gaze[:3])
        records = ingest.parse_gaze_log(text)
        assert [r.timestamp_ms for r in records] == [0, 40, 80]
        assert ingest.serialize_gaze_log(records) == text


class TestAnnotations:
    def test_single_label(self, ingest):
        [frame] = ingest.parse_annotations("0,Infant,ann1\n")
        assert frame.frame_index == 0
        assert frame.labels == frozenset({0})
        assert frame.annotator_id == "ann1"

    def test_multi_label(self, ingest):
        [frame] = ingest.parse_annotations("frame,labels,annotator\n1,Infant;Airway Provider,ann1\n")
        assert frame.labels == frozenset({0, 4})

    def test_unknown_label(self, ingest):
        with pytest.raises(TaxonomyError):
            ingest.parse_annotations("2,Robot,ann1\n")

    def test_empty_labels(self, ingest):
        with pytest.raises(EmptyLabels):
            ingest.parse_annotations("3,,ann1\n")

    def test_serialize_normalizes_label_order(self, ingest):
        annotations = ingest.parse_annotations("1,Airway Provider;Infant,ann1\n")
        text = ingest.serialize_annotations(annotations)
        assert text == "frame,labels,annotator\n1,Infant;Airway Provider,ann1\n"
        assert ingest.parse_annotations(text) == annotations

    def test_timeline_keeps_lowest_label(self, ingest):
        annotations = ingest.parse_annotations(
            "0,Vitals Monitor;Infant,a\n1,Airway Equipment,a\n1,Infant,b\n")
        t = ingest.annotations_to_timeline(annotations, annotator="a")
        assert t.labels == (0, 3)
        assert t.frame_indices == (0, 1)


class TestTimelineCsv:
    def test_round_trip_with_unlabelled_frames(self, ingest):
        t = timeline([0, None, 6], frames=[2, 5, 9])
        text = ingest.serialize_timeline(t)
        assert text == "frame,label\n2,Infant\n5,\n9,Other Physical Objects\n"
        parsed = ingest.parse_timeline(text)
        assert parsed.labels == t.labels
        assert parsed.frame_indices == t.frame_indices

    def test_out_of_order(self, ingest):
        with pytest.raises(OrderError):
            ingest.parse_timeline("frame,label\n3,Infant\n3,Infant\n")


class TestSplit:
    def test_single_video_ratio(self, ingest):
        manifest = ingest.split_dataset([("v", i) for i in range(10)], 0.8, seed=7)
        assert len(manifest.train_ids["v"]) == 8
        assert len(manifest.val_ids["v"]) == 2

    def test_stratified_per_video(self, ingest):
        frames = [(v, i) for v in ("a", "b") for i in range(10)]
        manifest = ingest.split_dataset(frames, 0.8, seed=1)
        for video in ("a", "b"):
            assert len(manifest.train_ids[video]) == 8
            assert set(manifest.train_ids[video]) | set(manifest.val_ids[video]) == set(range(10))
            assert not set(manifest.train_ids[video]) & set(manifest.val_ids[video])

    def test_deterministic_and_byte_identical(self, ingest):
        frames = [("x", i) for i in range(37)] + [("y", i) for i in range(5)]
        first = ingest.split_dataset(frames, 0.8, seed=99)
        second = ingest.split_dataset(list(reversed(frames)), 0.8, seed=99)
        assert first.to_text() == second.to_text()

    def test_fraction_within_one_frame(self, ingest):
        for n in range(1, 30):
            manifest = ingest.split_dataset([("v", i) for i in range(n)], 0.7, seed=n)
            assert len(manifest.train_ids["v"]) in (int(np.floor(0.7 * n)), int(np.ceil(0.7 * n)))

    def test_manifest_text_round_trip(self, ingest):
        manifest = ingest.split_dataset([("v", i) for i in range(12)], 0.75, seed=2**63 + 5)
        assert SplitManifest.from_text(manifest.to_text()) == manifest

    def test_empty(self, ingest):
        with pytest.raises(EmptyInput):
            ingest.split_dataset([], 0.8, seed=0)

    def test_bad_ratio(self, ingest):
        with pytest.raises(InvalidInput):
            ingest.split_dataset([("v", 0)], 1.0, seed=0)


class TestFlips:
    def test_uniform_image(self, ingest):
        img = solid(5, 3, (90, 90, 90))
        flips = ingest.augment_flips(img)
        assert len(flips) == 4
        for f in flips:
            np.testing.assert_array_equal(f.pixels, img.pixels)

    def test_corner_tracking(self, ingest):
        px = np.zeros((2, 2, 3), dtype=np.uint8)
        px[0, 0] = (255, 0, 0)
        _, horizontal, vertical, diagonal = ingest.augment_flips(Image(pixels=px))
        assert horizontal.pixel(1, 0) == (255, 0, 0)
        assert vertical.pixel(0, 1) == (255, 0, 0)
        assert diagonal.pixel(1, 1) == (255, 0, 0)

    def test_involutions_keep_shape(self, ingest, rng):
        img = Image(pixels=rng.integers(0, 256, size=(3, 7, 3), dtype=np.uint8))
        for flipped in ingest.augment_flips(img)[1:]:
            assert (flipped.width, flipped.height) == (7, 3)
        _, horizontal, vertical, diagonal = ingest.augment_flips(img)
        np.testing.assert_array_equal(ingest.augment_flips(diagonal)[3].pixels, img.pixels)
        np.testing.assert_array_equal(ingest.augment_flips(horizontal)[2].pixels, diagonal.pixels)


class TestShots:
    def test_per_class_cap_and_determinism(self, ingest):
        t = timeline([0] * 10 + [1] * 3 + [None] * 2)
        picked = ingest.select_shots(t, shots=4, seed=5)
        assert sum(1 for _, label in picked if label == 0) == 4
        assert sum(1 for _, label in picked if label == 1) == 3
        assert picked == ingest.select_shots(t, shots=4, seed=5)
        assert picked == sorted(picked)

    def test_restricted_to_allowed(self, ingest):
        t = timeline([0] * 10)
        picked = ingest.select_shots(t, shots=10, seed=0, allowed=[1, 3])
        assert [f for f, _ in picked] == [1, 3]


class TestFrameFiles:
    def test_ppm_and_bmp_round_trip(self, tmp_path, rng):
        img = Image(pixels=rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8))
        for suffix in (".ppm", ".bmp"):
            path = tmp_path / f"frame{suffix}"
            write_image(img, path)
            np.testing.assert_array_equal(read_image(path).pixels, img.pixels)

    def test_ppm_header_is_p6(self, tmp_path):
        path = tmp_path / "x.ppm"
        write_image(solid(2, 1, (1, 2, 3)), path)
        data = path.read_bytes()
        assert data.startswith(b"P6")
        assert data.endswith(bytes([1, 2, 3, 1, 2, 3]))

    def test_directory_source_orders_frames(self, tmp_path):
        for index in (10, 2, 7):
            write_image(solid(2, 2, (index, 0, 0)), tmp_path / frame_filename(index))
        (tmp_path / "notes.txt").write_text("ignored")
        source = DirectoryFrameSource(tmp_path)
        assert source.indices() == [2, 7, 10]
        assert [img.pixel(0, 0)[0] for _, img in source] == [2, 7, 10]
