import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dapotion import pose_io


def make_doc(**overrides):
    doc = {
        "frames": 2,
        "joints": 1,
        "image_size": [320, 240],
        "positions": [[[10.0, 20.0, 30.0]], [[11.0, 21.0, 31.0]]],
    }
    doc.update(overrides)
    return doc


def parse(doc):
    return pose_io.parse_pose_sequence(json.dumps(doc))


class TestParsing:
    def test_minimal_file(self):
        seq = parse(make_doc())
        assert seq.num_frames == 2
        assert seq.num_joints == 1
        assert seq.frame == pose_io.FRAME_IMAGE  # no boxes: already image frame

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError, match="too few frames"):
            parse(make_doc(frames=1, positions=[[[1.0, 2.0, 3.0]]]))

    def test_out_of_range_coordinate(self):
        with pytest.raises(ValueError, match=r"out of \[0, 256\)"):
            parse(make_doc(positions=[[[256.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]]]))

    def test_inconsistent_rows(self):
        with pytest.raises(ValueError, match="inconsistent row"):
            parse(make_doc(joints=2, positions=[[[1, 2, 3], [4, 5, 6]], [[1, 2, 3]]]))

    def test_frames_mismatch(self):
        with pytest.raises(ValueError, match="frames field"):
            parse(make_doc(frames=3))

    def test_malformed_json(self):
        with pytest.raises(ValueError, match="malformed"):
            pose_io.parse_pose_sequence(b"{not json")

    def test_unknown_fields_ignored(self):
        seq = parse(make_doc(extra_field={"anything": 1}))
        assert seq.num_frames == 2

    def test_bboxes_imply_bbox_frame(self):
        seq = parse(make_doc(bboxes=[[0, 0, 100, 100]] * 2))
        assert seq.frame == pose_io.FRAME_BBOX
        assert seq.bboxes.num_frames == 2

    def test_bad_bbox_dims(self):
        with pytest.raises(ValueError, match="positive width"):
            parse(make_doc(bboxes=[[0, 0, 0, 100]] * 2))

    def test_label_and_joint_names(self):
        seq = parse(make_doc(label="swing", joint_names=["head"]))
        assert seq.label == "swing"
        assert seq.joint_names == ("head",)

    def test_reads_byte_streams(self):
        raw = json.dumps(make_doc()).encode()
        assert pose_io.parse_pose_sequence(io.BytesIO(raw)).num_frames == 2


class TestRoundTrip:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_serialize_parse_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(2, 7))
        J = int(rng.integers(1, 5))
        seq = pose_io.PoseSequence(
            positions=rng.uniform(0, 256, size=(T, J, 3)),
            image_size=(int(rng.integers(10, 600)), int(rng.integers(10, 600))),
            frame=pose_io.FRAME_BBOX,
            label=None if rng.random() < 0.5 else "cls",
            joint_names=tuple(f"j{k}" for k in range(J)) if rng.random() < 0.5 else None,
            bboxes=pose_io.BBoxSequence(
                np.column_stack(
                    [
                        rng.uniform(0, 50, T),
                        rng.uniform(0, 50, T),
                        rng.uniform(1, 300, T),
                        rng.uniform(1, 300, T),
                    ]
                )
            ),
        )
        again = pose_io.parse_pose_sequence(pose_io.serialize_pose_sequence(seq))
        assert again == seq


class TestBBoxTransform:
    def test_documented_example(self):
        seq = parse(
            make_doc(
                positions=[[[128.0, 0.0, 7.0]], [[128.0, 0.0, 7.0]]],
                bboxes=[[10.0, 5.0, 100.0, 50.0]] * 2,
            )
        )
        out = pose_io.bbox_to_image_frame(seq, seq.bboxes)
        assert out.positions[0, 0, 0] == pytest.approx(60.0)  # 10 + 128/256*100
        assert out.frame == pose_io.FRAME_IMAGE

    def test_left_edge_fixed_point(self):
        seq = parse(make_doc(positions=[[[0.0, 0.0, 1.0]]] * 2, bboxes=[[33.0, 7.0, 64.0, 32.0]] * 2))
        out = pose_io.bbox_to_image_frame(seq, seq.bboxes)
        assert out.positions[0, 0, 0] == 33.0
        assert out.positions[0, 0, 1] == 7.0

    def test_identity_box(self):
        rng = np.random.default_rng(0)
        pos = rng.uniform(0, 256, size=(3, 2, 3))
        seq = pose_io.PoseSequence(pos, (256, 256), frame=pose_io.FRAME_BBOX)
        boxes = pose_io.BBoxSequence(np.tile([0.0, 0.0, 256.0, 256.0], (3, 1)))
        out = pose_io.bbox_to_image_frame(seq, boxes)
        np.testing.assert_array_equal(out.positions, pos)

    def test_depth_bit_identical(self):
        rng = np.random.default_rng(1)
        pos = rng.uniform(0, 256, size=(4, 3, 3))
        seq = pose_io.PoseSequence(pos, (64, 64), frame=pose_io.FRAME_BBOX)
        boxes = pose_io.BBoxSequence(rng.uniform(1, 100, size=(4, 4)) + [[0, 0, 1, 1]])
        out = pose_io.bbox_to_image_frame(seq, boxes)
        np.testing.assert_array_equal(out.positions[:, :, 2], pos[:, :, 2])

    def test_frame_count_mismatch(self):
        seq = pose_io.PoseSequence(
            np.zeros((2, 1, 3)), (64, 64), frame=pose_io.FRAME_BBOX
        )
        boxes = pose_io.BBoxSequence(np.array([[0.0, 0.0, 10.0, 10.0]]))
        with pytest.raises(ValueError, match="frame-count mismatch"):
            pose_io.bbox_to_image_frame(seq, boxes)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
    def test_affine_in_xy(self, alpha, seed):
        # transform(alpha p1 + (1-alpha) p2) == alpha transform(p1) + (1-alpha) transform(p2)
        rng = np.random.default_rng(seed)
        p1 = rng.uniform(0, 256, size=(2, 1, 3))
        p2 = rng.uniform(0, 256, size=(2, 1, 3))
        boxes = pose_io.BBoxSequence(
            np.column_stack([rng.uniform(0, 9, 2), rng.uniform(0, 9, 2), rng.uniform(1, 200, 2), rng.uniform(1, 200, 2)])
        )

        def tf(p):
            seq = pose_io.PoseSequence(p, (256, 256), frame=pose_io.FRAME_BBOX)
            return pose_io.bbox_to_image_frame(seq, boxes).positions

        mix = alpha * p1 + (1 - alpha) * p2
        lhs = tf(mix)[:, :, :2]
        rhs = alpha * tf(p1)[:, :, :2] + (1 - alpha) * tf(p2)[:, :, :2]
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestGrid:
    def test_midpoint(self):
        grid = pose_io.GridSpec.for_image((16, 16, 16), (320, 240))
        seq = pose_io.PoseSequence(
            np.array([[[160.0, 120.0, 10.0]], [[160.0, 120.0, 10.0]]]),
            (320, 240),
            frame=pose_io.FRAME_IMAGE,
        )
        out = pose_io.normalize_to_grid(seq, grid)
        assert out.positions[0, 0, 0] == pytest.approx(7.5)
        assert out.positions[0, 0, 1] == pytest.approx(7.5)

    def test_depth_mapping(self):
        grid = pose_io.GridSpec.for_image((16, 16, 16), (256, 256))
        assert grid.to_voxels([0.0, 0.0, 128.0])[2] == pytest.approx(7.5)

    def test_clamping(self):
        grid = pose_io.GridSpec(dims=(8, 8, 8), scale=(1.0, 1.0, 1.0))
        seq = pose_io.PoseSequence(
            np.array([[[255.0, 0.0, 100.0]]] * 2), (4, 4), frame=pose_io.FRAME_IMAGE
        )
        out = pose_io.normalize_to_grid(seq, grid)
        assert out.positions[0, 0, 0] == 7.0  # clamped to dim-1
        assert out.positions[0, 0, 2] == 7.0

    def test_requires_image_frame(self):
        seq = parse(make_doc(bboxes=[[0, 0, 10, 10]] * 2))
        grid = pose_io.GridSpec.for_image((8, 8, 8), (320, 240))
        with pytest.raises(ValueError, match="image-frame"):
            pose_io.normalize_to_grid(seq, grid)

    def test_degenerate_image_size(self):
        with pytest.raises(ValueError, match="degenerate image_size"):
            pose_io.GridSpec.for_image((8, 8, 8), (0, 240))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_affine_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        grid = pose_io.GridSpec.for_image((16, 32, 16), (int(rng.integers(2, 999)), int(rng.integers(2, 999))))
        points = rng.uniform(0, 256, size=(5, 3))
        np.testing.assert_allclose(grid.from_voxels(grid.to_voxels(points)), points, rtol=1e-12, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_clamp_invariant_random_inputs(self, seed):
        rng = np.random.default_rng(seed)
        grid = pose_io.GridSpec(dims=(8, 8, 8), scale=(0.05, 0.05, 0.03))
        pos = rng.uniform(0, 256, size=(3, 2, 3))
        seq = pose_io.PoseSequence(pos, (16, 16), frame=pose_io.FRAME_IMAGE)
        out = pose_io.normalize_to_grid(seq, grid)
        assert np.all(out.positions >= 0.0)
        assert np.all(out.positions <= np.asarray(grid.dims) - 1.0)


class TestMirrorPairs:
    def test_pairs_found(self):
        names = ("hip_L", "hip_R", "head", "hand_R", "hand_L")
        assert pose_io.mirror_pairs(names) == [(4, 3), (0, 1)]

    def test_no_pairs(self):
        assert pose_io.mirror_pairs(("a", "b")) == []
        assert pose_io.mirror_pairs(None) == []

    def test_unmatched_side_ignored(self):
        assert pose_io.mirror_pairs(("hip_L", "head")) == []


class TestManifests:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "list.tsv"
        pose_io.write_manifest(path, [("a.json", "x"), ("sub/b.json", "y")])
        records = pose_io.read_manifest(path)
        assert records == [(str(tmp_path / "a.json"), "x"), (str(tmp_path / "sub/b.json"), "y")]

    def test_bad_line(self, tmp_path):
        path = tmp_path / "list.tsv"
        path.write_text("only_one_field\n")
        with pytest.raises(ValueError, match="manifest lines"):
            pose_io.read_manifest(path)
