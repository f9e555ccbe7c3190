import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatuq import synth
from splatuq.scene import save_scene

BOX_LO = np.array([-synth.BOX_HALF, -synth.BOX_HALF, 0.0])
BOX_HI = np.array([synth.BOX_HALF, synth.BOX_HALF, synth.BOX_HEIGHT])


def segment_hits_box(points, eye):
    """Slab test: does the segment from each point to ``eye`` pass through the box?"""
    d = eye[None, :] - points
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (BOX_LO - points) / d
        b = (BOX_HI - points) / d
    near = np.nanmax(np.minimum(a, b), axis=1)
    far = np.nanmin(np.maximum(a, b), axis=1)
    return np.maximum(near, 0.0) <= np.minimum(far, 1.0)


class TestMakeScene:
    @pytest.mark.parametrize("kind", synth.SCENE_KINDS)
    def test_deterministic_bytes(self, kind, tmp_path):
        save_scene(synth.make_scene(kind, 200, 7), tmp_path / "a.ply")
        save_scene(synth.make_scene(kind, 200, 7), tmp_path / "b.ply")
        assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()

    def test_seed_changes_scene(self):
        assert not np.array_equal(synth.make_scene("box", 100, 1).positions, synth.make_scene("box", 100, 2).positions)

    def test_single_cluster_at_origin(self):
        scene = synth.make_scene("cluster", 1, 0)
        assert len(scene) == 1
        np.testing.assert_array_equal(scene.positions, [[0.0, 0.0, 0.0]])

    @pytest.mark.parametrize("kind", synth.SCENE_KINDS)
    def test_counts_and_zero_uncertainty(self, kind):
        scene = synth.make_scene(kind, 123, 0)
        assert len(scene) == 123
        assert not scene.uncert_sh.any()
        scene.validate()

    def test_errors(self):
        with pytest.raises(ValueError):
            synth.make_scene("teapot", 10, 0)
        with pytest.raises(ValueError):
            synth.make_scene("box", 0, 0)

    def test_poster_above_floor(self):
        scene = synth.make_scene("poster", 2000, 0)
        assert scene.positions[:, 2].min() >= 0.0

    def test_poster_back_hidden_by_box(self):
        """Every camera above the horizon that faces the card's back within 55 degrees of its
        normal has its line of sight to the card blocked by the box."""
        scene = synth.make_scene("poster", 2000, 0)
        card = scene.positions[-500:].astype(np.float64)
        back = -synth.card_front_normal()
        rng = np.random.default_rng(0)
        az = rng.uniform(0, 2 * np.pi, 3000)
        el = rng.uniform(1e-3, np.pi / 2, 3000)
        radius = rng.uniform(2.0, 8.0, 3000)
        eyes = np.stack([radius * np.cos(el) * np.cos(az), radius * np.cos(el) * np.sin(az),
                         0.4 + radius * np.sin(el)], axis=1)
        checked = 0
        for eye in eyes:
            rays = eye[None, :] - card
            cos = rays @ back / np.linalg.norm(rays, axis=1)
            facing = cos >= np.cos(np.radians(55.0))
            checked += facing.sum()
            assert segment_hits_box(card[facing], eye).all()
        assert checked > 10_000

    def test_poster_back_unseen_from_orbit_top(self):
        """From the experiment's orbit, the back of the card is supervised far less than the front."""
        scene = synth.make_scene("poster", 2000, 0)
        card = scene.positions[-500:].astype(np.float64)
        front = synth.card_front_normal()
        hidden, back_facing = 0, 0
        for cam in synth.make_orbit(64, 3.5, 30.0, target=(0.0, 0.0, 0.4)):
            rays = cam.center[None, :] - card
            b = rays @ front < 0
            back_facing += b.sum()
            hidden += segment_hits_box(card[b], cam.center).sum()
        assert hidden / back_facing > 0.9


class TestOrbit:
    def test_four_cameras(self):
        cams = synth.make_orbit(4, 2.0, 0.0)
        centers = np.array([c.center for c in cams])
        np.testing.assert_allclose(centers, [[2, 0, 0], [0, 2, 0], [-2, 0, 0], [0, -2, 0]], atol=1e-12)
        np.testing.assert_allclose(centers[0], -centers[2], atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.floats(0.5, 10.0), st.floats(-80.0, 89.0), st.floats(10.0, 360.0))
    def test_axis_through_origin(self, n, radius, elevation, arc):
        for cam in synth.make_orbit(n, radius, elevation, arc, width=16, height=16):
            c = cam.center
            closest = c + cam.forward * np.dot(-c, cam.forward)
            assert np.linalg.norm(closest) < 1e-6
            assert np.linalg.norm(c) == pytest.approx(radius, rel=1e-9)

    def test_pole(self):
        cams = synth.make_orbit(5, 3.0, 90.0)
        for cam in cams:
            np.testing.assert_allclose(cam.center, [0.0, 0.0, 3.0], atol=1e-12)
            np.testing.assert_allclose(cam.forward, [0.0, 0.0, -1.0], atol=1e-12)

    def test_partial_arc_endpoints(self):
        cams = synth.make_orbit(3, 1.0, 0.0, 90.0)
        np.testing.assert_allclose(cams[-1].center, [0.0, 1.0, 0.0], atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            synth.make_orbit(0, 1.0, 0.0)
        with pytest.raises(ValueError):
            synth.make_orbit(3, 0.0, 0.0)


class TestHoldout:
    def test_default_split_sizes(self):
        train, ev = synth.holdout_indices(226, 50, 3)
        assert len(train) == 176 and len(ev) == 50
        assert np.all(np.diff(ev) % 226 == 1)

    def test_single(self):
        train, ev = synth.holdout_indices(10, 1, 0)
        assert len(ev) == 1 and len(train) == 9

    def test_seeded(self):
        a = synth.holdout_indices(64, 16, 5)
        b = synth.holdout_indices(64, 16, 5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 300), st.data())
    def test_partition(self, n, data):
        k = data.draw(st.integers(1, n - 1))
        seed = data.draw(st.integers(0, 2**31))
        train, ev = synth.holdout_indices(n, k, seed)
        assert len(ev) == k
        assert np.all((ev[1:] - ev[:-1]) % n == 1)
        assert sorted(np.concatenate([train, ev]).tolist()) == list(range(n))
        assert np.all(np.diff(train) > 0)

    def test_split_cameras(self):
        cams = synth.make_orbit(8, 1.0, 0.0, width=8, height=8)
        train, ev = synth.split_consecutive_holdout(cams, 3, 1)
        assert len(train) == 5 and len(ev) == 3
        assert not {id(c) for c in train} & {id(c) for c in ev}

    @pytest.mark.parametrize("k", [10, 11, 0])
    def test_errors(self, k):
        with pytest.raises(ValueError):
            synth.holdout_indices(10, k, 0)


class TestReconstruct:
    def test_fits_training_views_only(self):
        from splatuq.render import render, render_many
        truth = synth.make_scene("box", 300, 1)
        cams = synth.make_orbit(12, 3.0, 30.0, width=32, height=32, target=(0.0, 0.0, 0.4))
        train, ev = cams[:8], cams[8:]
        recon = synth.reconstruct(truth, train, render_many(truth, train), seed=2, iterations=300)
        err = lambda c: np.abs(render(recon, c).color - render(truth, c).color).mean()  # noqa: E731
        assert max(err(c) for c in train) < min(err(c) for c in ev)
        assert recon.same_geometry(truth) and not recon.uncert_sh.any()
