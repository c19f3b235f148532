import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signkit.errors import (
    DuplicateError,
    EmptyError,
    LabelError,
    LayoutError,
    OrderError,
    ParseError,
)
from signkit.keypoints import (
    BUILTIN_LAYOUTS,
    HOLISTIC543,
    PAPER522,
    DatasetManifest,
    GestureSequence,
    KeypointFrame,
    LayoutSpec,
    parse_frame_record,
    read_manifest,
    read_sequence,
    register_layout,
    validate_manifest,
    write_frame_record,
    write_manifest,
    write_sequence,
)

TINY = register_layout(
    LayoutSpec(
        name="tiny6",
        blocks=(("left_hand", 0, 2), ("right_hand", 2, 4), ("body", 4, 6)),
    )
)


def make_frame(t=0, k=543, layout=HOLISTIC543, fill=0.5):
    lm = np.full((k, 3), fill, dtype=np.float64)
    return KeypointFrame(t=t, landmarks=lm, layout=layout)


def frame_line(k, t=0):
    lm = [[0.1 * i, 0.2, 0.0] for i in range(k)]
    return json.dumps({"t": t, "lm": lm})


class TestLayouts:
    def test_holistic543_block_arithmetic(self):
        sizes = [end - start for _, start, end in HOLISTIC543.blocks]
        assert sizes == [21, 21, 468, 33]
        assert sum(sizes) == 543
        assert HOLISTIC543.total_landmarks == 543

    def test_paper522_total(self):
        assert PAPER522.total_landmarks == 522
        assert sum(e - s for _, s, e in PAPER522.blocks) == 522

    def test_blocks_cover_range_exactly(self):
        for layout in BUILTIN_LAYOUTS.values():
            cursor = 0
            for _, start, end in layout.blocks:
                assert start == cursor
                cursor = end
            assert cursor == layout.total_landmarks

    def test_non_contiguous_blocks_rejected(self):
        with pytest.raises(LayoutError):
            LayoutSpec(name="bad", blocks=(("left_hand", 0, 2), ("body", 3, 5)))

    def test_unknown_block_name_rejected(self):
        with pytest.raises(LayoutError):
            LayoutSpec(name="bad", blocks=(("torso", 0, 5),))

    def test_block_index(self):
        assert HOLISTIC543.block_index("body", 12) == 510 + 12
        with pytest.raises(LayoutError):
            HOLISTIC543.block_index("body", 33)


class TestFrameParsing:
    def test_parse_full_frame(self):
        frame = parse_frame_record(frame_line(543), HOLISTIC543)
        assert frame.landmarks.shape == (543, 3)
        assert frame.t == 0

    def test_count_mismatch_is_layout_error(self):
        with pytest.raises(LayoutError):
            parse_frame_record(frame_line(542), HOLISTIC543)

    def test_malformed_json_is_parse_error(self):
        with pytest.raises(ParseError):
            parse_frame_record('{"t":0,"lm":[[1,2', HOLISTIC543)

    def test_infinite_coordinate_is_value_error(self):
        line = '{"t":0,"lm":[[Infinity,0.0,0.0],[0.0,0.0,0.0]]}'
        layout = LayoutSpec(name="pair2", blocks=(("body", 0, 2),))
        with pytest.raises(ValueError):
            parse_frame_record(line, layout)

    def test_null_triple_parses_to_nan_sentinel(self):
        line = '{"t":3,"lm":[null,[0.5,0.5,0.0]]}'
        layout = LayoutSpec(name="pair2", blocks=(("body", 0, 2),))
        frame = parse_frame_record(line, layout)
        assert np.isnan(frame.landmarks[0]).all()
        assert not np.isnan(frame.landmarks[1]).any()

    def test_partial_nan_rejected(self):
        lm = np.zeros((6, 3))
        lm[2, 1] = math.nan
        with pytest.raises(ValueError):
            KeypointFrame(t=0, landmarks=lm, layout=TINY)

    def test_frames_are_immutable(self):
        frame = make_frame(layout=TINY, k=6)
        with pytest.raises(ValueError):
            frame.landmarks[0, 0] = 1.0


class TestRoundTrip:
    def test_write_then_parse_identity(self):
        rng = np.random.default_rng(0)
        lm = rng.normal(size=(6, 3))
        frame = KeypointFrame(t=7, landmarks=lm, layout=TINY)
        line = write_frame_record(frame)
        back = parse_frame_record(line, TINY)
        assert back.t == frame.t
        np.testing.assert_array_equal(back.landmarks, frame.landmarks)

    def test_parse_write_canonicalizes(self):
        line = '{"t":0,"lm":[[0.1,0.2,0.0],[1.0,2.0,3.0]]}'
        layout = LayoutSpec(name="pair2", blocks=(("body", 0, 2),))
        assert write_frame_record(parse_frame_record(line, layout)) == line

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6), st.data())
    def test_roundtrip_oracle_random_frames(self, t, data):
        # [DERIVED] parse∘write identity over random frames, incl. dropout rows
        values = data.draw(
            st.lists(
                st.one_of(
                    st.none(),
                    st.tuples(
                        st.floats(-1e6, 1e6, allow_nan=False),
                        st.floats(-1e6, 1e6, allow_nan=False),
                        st.floats(-1e6, 1e6, allow_nan=False),
                    ),
                ),
                min_size=6,
                max_size=6,
            )
        )
        lm = np.array(
            [(math.nan,) * 3 if v is None else v for v in values], dtype=np.float64
        )
        frame = KeypointFrame(t=t, landmarks=lm, layout=TINY)
        line = write_frame_record(frame)
        back = parse_frame_record(line, TINY)
        assert back.t == frame.t
        np.testing.assert_array_equal(back.landmarks, frame.landmarks)
        assert write_frame_record(back) == line


class TestSequenceIO:
    def test_read_sequence_30_frames(self, tmp_path):
        frames = tuple(make_frame(t=i, k=6, layout=TINY, fill=0.1 * i) for i in range(30))
        seq = GestureSequence(frames=frames, label="wave", source_id="s0")
        path = tmp_path / "seq.kpjl"
        write_sequence(seq, path)
        back = read_sequence(path, label="wave")
        assert len(back) == 30
        assert back.label == "wave"
        np.testing.assert_array_equal(back.as_array(), seq.as_array())

    def test_non_monotone_t_is_order_error(self, tmp_path):
        path = tmp_path / "bad.kpjl"
        lines = ['{"layout":"holistic543","k":543,"fps":30}']
        for t in (0, 1, 1):
            lines.append(json.dumps({"t": t, "lm": [[0.0, 0.0, 0.0]] * 543}))
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(OrderError):
            read_sequence(path)

    def test_empty_file_is_empty_error(self, tmp_path):
        path = tmp_path / "empty.kpjl"
        path.write_text("")
        with pytest.raises(EmptyError):
            read_sequence(path)

    def test_header_only_is_empty_error(self, tmp_path):
        path = tmp_path / "header.kpjl"
        path.write_text('{"layout":"holistic543","k":543,"fps":30}\n')
        with pytest.raises(EmptyError):
            read_sequence(path)

    def test_wrong_count_line_is_layout_error(self, tmp_path):
        path = tmp_path / "mixed.kpjl"
        lines = [
            '{"layout":"holistic543","k":543,"fps":30}',
            json.dumps({"t": 0, "lm": [[0.0, 0.0, 0.0]] * 543}),
            json.dumps({"t": 1, "lm": [[0.0, 0.0, 0.0]] * 522}),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(LayoutError):
            read_sequence(path)

    def test_file_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(42)
        frames = tuple(
            KeypointFrame(t=i, landmarks=rng.normal(size=(6, 3)), layout=TINY)
            for i in range(10)
        )
        seq = GestureSequence(frames=frames, source_id="rt")
        path = tmp_path / "rt.kpjl"
        write_sequence(seq, path)
        first = path.read_bytes()
        write_sequence(read_sequence(path), path)
        assert path.read_bytes() == first


class TestSequenceInvariants:
    def test_empty_sequence_rejected(self):
        with pytest.raises(EmptyError):
            GestureSequence(frames=())

    def test_duplicate_t_rejected(self):
        frames = (make_frame(t=0, k=6, layout=TINY), make_frame(t=0, k=6, layout=TINY))
        with pytest.raises(OrderError):
            GestureSequence(frames=frames)

    def test_mixed_layout_rejected(self):
        other = LayoutSpec(name="quad4", blocks=(("body", 0, 4),))
        frames = (
            make_frame(t=0, k=6, layout=TINY),
            KeypointFrame(t=1, landmarks=np.zeros((4, 3)), layout=other),
        )
        with pytest.raises(LayoutError):
            GestureSequence(frames=frames)


class TestManifest:
    def test_per_class_counts(self):
        seqs = [(f"a{i}.kpjl", "c1") for i in range(10)]
        seqs += [(f"b{i}.kpjl", "c2") for i in range(10)]
        manifest = DatasetManifest(classes=("c1", "c2"), sequences=seqs)
        assert validate_manifest(manifest) == {"c1": 10, "c2": 10}

    def test_unknown_label_rejected(self):
        manifest = DatasetManifest(classes=("c1", "c2"), sequences=[("x.kpjl", "zz")])
        with pytest.raises(LabelError):
            validate_manifest(manifest)

    def test_duplicate_path_rejected(self):
        manifest = DatasetManifest(
            classes=("c1", "c2"),
            sequences=[("x.kpjl", "c1"), ("x.kpjl", "c2")],
        )
        with pytest.raises(DuplicateError):
            validate_manifest(manifest)

    def test_twenty_class_totals(self):
        classes = tuple(f"g{i:02d}" for i in range(20))
        seqs = [(f"{c}_{j}.kpjl", c) for c in classes for j in range(5)]
        manifest = DatasetManifest(classes=classes, sequences=seqs)
        counts = validate_manifest(manifest)
        assert sum(counts.values()) == 100

    def test_manifest_file_roundtrip(self, tmp_path):
        manifest = DatasetManifest(
            classes=("c1", "c2"), sequences=[("x.kpjl", "c1")], seed=7
        )
        path = tmp_path / "manifest.json"
        write_manifest(manifest, path)
        assert read_manifest(path) == manifest
