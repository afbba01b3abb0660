import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_raster, front_side, make_frame, random_frame, scanline_cell_raster
from playvalue.field import (
    FIELD_AREA,
    TOWARD_HIGH_X,
    TOWARD_LOW_X,
    adjusted_to_dir,
    adjusted_to_x,
    adjusted_to_y,
    dir_to_adjusted,
    x_to_adjusted,
    y_to_adjusted,
)
from playvalue.geometry import (
    BC_AND_DEFENSE,
    all_cells,
    polygon_area,
    relative_arrays,
    separate_duplicates,
    voronoi_cell,
    voronoi_features,
)


class TestCoordinates:
    def test_known_point_toward_low_x(self):
        np.testing.assert_allclose(x_to_adjusted(60.64, TOWARD_LOW_X), 50.64)
        np.testing.assert_allclose(y_to_adjusted(29.70, TOWARD_LOW_X), -3.05, atol=1e-12)

    @pytest.mark.parametrize("direction", [TOWARD_LOW_X, TOWARD_HIGH_X])
    def test_round_trip(self, direction, rng):
        x = rng.uniform(0, 120, 50)
        y = rng.uniform(0, 53.3, 50)
        d = rng.uniform(0, 360, 50)
        np.testing.assert_allclose(adjusted_to_x(x_to_adjusted(x, direction), direction), x)
        np.testing.assert_allclose(adjusted_to_y(y_to_adjusted(y, direction), direction), y)
        np.testing.assert_allclose(adjusted_to_dir(dir_to_adjusted(d, direction), direction), d, atol=1e-9)

    def test_goal_lines(self):
        assert float(x_to_adjusted(10.0, TOWARD_LOW_X)) == 0.0
        assert float(x_to_adjusted(110.0, TOWARD_HIGH_X)) == 0.0
        # behind the target goal line is allowed to go negative
        assert float(x_to_adjusted(5.0, TOWARD_LOW_X)) == -5.0

    def test_heading_at_endzone_is_zero(self):
        assert float(dir_to_adjusted(270.0, TOWARD_LOW_X)) == 0.0
        assert float(dir_to_adjusted(90.0, TOWARD_HIGH_X)) == 0.0

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            x_to_adjusted(1.0, "sideways")


class TestRelative:
    def test_pursuit_angle(self):
        # defender 5 yards straight ahead, facing back at the carrier
        xc, yc, d, diff, deg = relative_arrays(np.array([5.0]), np.array([0.0]), np.array([180.0]), 10.0, 0.0)
        np.testing.assert_allclose(d, [5.0])
        np.testing.assert_allclose(xc, [5.0])
        np.testing.assert_allclose(diff, [0.0], atol=1e-12)
        assert not deg[0]

    def test_coincident_player_is_degenerate(self):
        *_, diff, deg = relative_arrays(np.array([3.0]), np.array([1.0]), np.array([45.0]), 3.0, 1.0)
        assert deg[0] and diff[0] == 0.0


class TestVoronoiCells:
    def test_two_generators(self):
        xy = np.array([[30.0, 26.65], [90.0, 26.65]])
        poly, labels = voronoi_cell(xy, 0)
        np.testing.assert_allclose(polygon_area(poly), 3198.0)
        frame = make_frame(xy, sides=["offense", "defense"], ids=["BC", "D1"])
        f = voronoi_features(frame, "BC", TOWARD_LOW_X)
        np.testing.assert_allclose([f.area, f.area_in_front, f.close_adj, f.far_adj], [3198.0, 1599.0, 0.0, 50.0])

    def test_cells_tile_field(self, rng):
        for _ in range(20):
            pts = rng.uniform([0, 0], [120, 53.3], size=(22, 2))
            total = math.fsum(polygon_area(p) for p in all_cells(pts))
            np.testing.assert_allclose(total, FIELD_AREA, rtol=1e-12)

    def test_matches_brute_force_labels(self):
        rng = np.random.default_rng(3)
        frame = random_frame(rng)
        pts = np.column_stack([frame.x, frame.y])
        counts = brute_force_raster(pts)
        exact = np.array([polygon_area(voronoi_cell(pts, i)[0]) for i in range(len(pts))])
        np.testing.assert_allclose(counts * 0.05**2, exact, rtol=0.005)

    def test_scanline_oracle_agrees_with_brute_force(self):
        rng = np.random.default_rng(4)
        frame = random_frame(rng)
        pts = np.column_stack([frame.x, frame.y])
        counts = brute_force_raster(pts)
        scan = np.array([scanline_cell_raster(pts, i) for i in range(len(pts))]) / 0.05**2
        # ties on a pixel centre may go either way
        np.testing.assert_allclose(scan, counts, atol=1.0)

    def test_in_front_converges_with_grid(self):
        rng = np.random.default_rng(5)
        errors = {0.05: [], 0.005: []}
        for _ in range(20):
            frame = random_frame(rng)
            cid = frame.player_ids[int(rng.integers(11))]
            f = voronoi_features(frame, cid, TOWARD_HIGH_X)
            pts = np.column_stack([frame.x, frame.y])
            i = frame.index(cid)
            for h in errors:
                r = scanline_cell_raster(pts, i, step=h, front=(pts[i, 0], front_side(TOWARD_HIGH_X)))
                errors[h].append(abs(r - f.area_in_front))
        assert max(errors[0.005]) < max(errors[0.05]) / 5
        assert max(errors[0.005]) < 0.2

    def test_bc_and_defense_variant_is_larger(self, rng):
        frame = random_frame(rng)
        cid = frame.player_ids[0]
        full = voronoi_features(frame, cid, TOWARD_LOW_X)
        defense_only = voronoi_features(frame, cid, TOWARD_LOW_X, variant=BC_AND_DEFENSE)
        assert defense_only.area >= full.area - 1e-9

    def test_unknown_variant(self, rng):
        frame = random_frame(rng)
        with pytest.raises(ValueError):
            voronoi_features(frame, frame.player_ids[0], TOWARD_LOW_X, variant="everyone")

    def test_bubble(self):
        # carrier boxed in by teammates, defender far away
        xy = [[60, 26], [59, 26], [61, 26], [60, 25], [60, 27], [100, 10]]
        sides = ["offense"] * 5 + ["defense"]
        ids = ["BC", "O1", "O2", "O3", "O4", "D1"]
        f = voronoi_features(make_frame(xy, sides=sides, ids=ids), "BC", TOWARD_LOW_X)
        assert f.bubble
        xy[1] = [59.0, 26.0]
        sides[1] = "defense"
        f = voronoi_features(make_frame(xy, sides=sides, ids=ids), "BC", TOWARD_LOW_X)
        assert not f.bubble

    def test_duplicates_are_separated_deterministically(self):
        pts = np.array([[10.0, 10.0], [10.0, 10.0], [50.0, 20.0]])
        a, moved = separate_duplicates(pts, ["b", "a", "c"])
        b, _ = separate_duplicates(pts[[1, 0, 2]], ["a", "b", "c"])
        assert moved
        np.testing.assert_array_equal(a[[1, 0, 2]], b)
        assert np.hypot(*(a[0] - a[1])) > 0


coords = st.tuples(st.floats(0.5, 119.5), st.floats(0.5, 52.8))


class TestVoronoiProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(coords, min_size=3, max_size=22, unique=True), st.data())
    def test_order_invariance(self, pts, data):
        pts = np.array(pts)
        perm = data.draw(st.permutations(range(len(pts))))
        before = polygon_area(voronoi_cell(pts, 0)[0])
        pos = list(perm).index(0)
        after = polygon_area(voronoi_cell(pts[list(perm)], pos)[0])
        np.testing.assert_allclose(after, before, rtol=1e-9, atol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(coords, min_size=2, max_size=22, unique=True))
    def test_partition_of_field(self, pts):
        pts = np.array(pts)
        _, moved = separate_duplicates(pts, list(range(len(pts))))
        total = math.fsum(polygon_area(p) for p in all_cells(pts))
        np.testing.assert_allclose(total, FIELD_AREA, rtol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(coords, min_size=2, max_size=10, unique=True), st.floats(-5, 5), st.floats(-5, 5))
    def test_translation_far_from_walls(self, pts, dx, dy):
        # cells that never touch the boundary are translation invariant
        pts = np.array(pts) * 0.2 + [50.0, 20.0]
        poly, labels = voronoi_cell(pts, 0)
        if -1 in labels:
            return
        moved, _ = voronoi_cell(pts + [dx, dy], 0)
        np.testing.assert_allclose(polygon_area(moved), polygon_area(poly), rtol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(coords, min_size=2, max_size=22, unique=True), st.sampled_from([TOWARD_LOW_X, TOWARD_HIGH_X]))
    def test_in_front_bounded_by_area(self, pts, direction):
        n = len(pts)
        sides = ["offense"] + ["defense"] * (n - 1)
        frame = make_frame(pts, sides=sides, ids=[f"P{i:02d}" for i in range(n)])
        f = voronoi_features(frame, "P00", direction)
        assert 0.0 <= f.area_in_front <= f.area + 1e-9
        assert 0.0 <= f.close_adj <= f.far_adj
