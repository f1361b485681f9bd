import numpy as np
import pytest

from tactile_explore.encoder import (
    CONTACT,
    FREE,
    MARKER_VALUE,
    UNEXPLORED,
    OccupancyGrid,
    codes_to_images,
    has_marker,
    image_to_codes,
    read_pgm,
    to_pgm,
    view_for_discriminator,
    view_for_explorer,
)
from tactile_explore.env import ContactSignal, EnvConfig, reset, step
from tactile_explore.errors import BoundsError

COLL, FREE_SIG = ContactSignal.COLLISION, ContactSignal.FREE


def random_grid(rng, shape=(60, 60)):
    cells = rng.choice([UNEXPLORED, FREE, CONTACT], size=shape, p=[0.5, 0.3, 0.2]).astype(np.uint8)
    finger = tuple(int(v) for v in rng.integers(0, shape[0], 2))
    return OccupancyGrid.from_cells(cells, finger)


class TestUpdate:
    def test_single_contact(self):
        g = OccupancyGrid((60, 60)).update((10, 10), COLL)
        assert (g.cells == CONTACT).sum() == 1
        assert (g.cells == UNEXPLORED).sum() == 3599
        assert g.explored_count == 1

    def test_latest_reading_wins(self):
        g = OccupancyGrid((60, 60))
        g.update((3, 4), FREE_SIG).update((3, 4), COLL)
        assert g.cells[3, 4] == CONTACT
        assert g.explored_count == 1

    def test_idempotent(self):
        g = OccupancyGrid((8, 8)).update((1, 1), FREE_SIG)
        before = g.cells.copy()
        g.update((1, 1), FREE_SIG)
        assert np.array_equal(before, g.cells)

    def test_out_of_bounds(self):
        with pytest.raises(BoundsError):
            OccupancyGrid((8, 8)).update((8, 0), FREE_SIG)
        with pytest.raises(BoundsError):
            OccupancyGrid((8, 8)).move_finger((-1, 0))

    def test_explored_count_tracks_distinct_probes(self, objects):
        cfg = EnvConfig(sensor_failure_rate=0.01)
        st = reset(cfg, objects, 3, 1)
        g = OccupancyGrid((60, 60), st.finger)
        rng = np.random.default_rng(0)
        probed = set()
        last = 0
        for _ in range(1500):
            r = step(st, int(rng.integers(4)))
            if r.target is not None:
                g.update(r.target, r.signal)
                probed.add(r.target)
            g.move_finger(r.finger)
            assert g.explored_count >= last
            last = g.explored_count
        assert g.explored_count == len(probed) == int(np.count_nonzero(g.cells))

    def test_no_repeat_episode_counts_every_step(self):
        g = OccupancyGrid((60, 60), (0, 0))
        for i in range(1, 40):
            g.update((i, 0), FREE_SIG)
        assert g.explored_count == 39


class TestViews:
    def test_fresh_grid_is_half_grey(self):
        assert np.all(view_for_discriminator(OccupancyGrid((60, 60))) == 0.5)

    def test_counts(self):
        g = OccupancyGrid((60, 60))
        for i in range(3):
            g.update((i, 0), COLL)
        for i in range(5):
            g.update((i, 5), FREE_SIG)
        img = g.view_for_discriminator()
        assert (img == 1.0).sum() == 3 and (img == 0.0).sum() == 5

    def test_fresh_explorer_view(self):
        img = view_for_explorer(OccupancyGrid((60, 60), (0, 0)))
        assert img[0, 0] == MARKER_VALUE
        assert (img == 0.5).sum() == 3599

    def test_random_grids(self, rng):
        for _ in range(1000):
            g = random_grid(rng)
            before = g.cells.copy()
            d = g.view_for_discriminator()
            e = g.view_for_explorer()
            assert not has_marker(d)
            assert (e == MARKER_VALUE).sum() == 1
            e[g.finger] = d[g.finger]
            assert np.array_equal(e, d)
            assert np.array_equal(before, g.cells)

    def test_marker_keeps_underlying_state(self):
        g = OccupancyGrid((4, 4), (1, 1)).update((1, 1), FREE_SIG)
        assert g.view_for_explorer()[1, 1] == MARKER_VALUE
        assert g.cells[1, 1] == FREE

    def test_codes_round_trip(self, rng):
        g = random_grid(rng, (10, 10))
        img = g.view_for_discriminator()
        assert np.array_equal(image_to_codes(img), g.cells)
        assert np.array_equal(codes_to_images(g.cells[None])[0], img.astype(np.float32))
        with pytest.raises(ValueError):
            image_to_codes(g.view_for_explorer())


class TestPGM:
    def test_levels_and_orientation(self):
        g = OccupancyGrid((3, 2), (0, 0)).update((2, 1), COLL).update((1, 0), FREE_SIG)
        text = to_pgm(g.view_for_explorer())
        lines = text.splitlines()
        assert lines[:3] == ["P2", "3 2", "255"]
        # the first raster row is the top (largest y)
        assert lines[3].split() == ["128", "128", "255"]
        assert lines[4].split() == ["191", "0", "128"]

    def test_round_trip(self, tmp_path, rng):
        g = random_grid(rng, (12, 12))
        path = tmp_path / "g.pgm"
        path.write_text(to_pgm(g.view_for_explorer()))
        assert np.array_equal(read_pgm(path), g.view_for_explorer())
