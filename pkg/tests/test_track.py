import numpy as np
import pytest

from apexplan import track as trk


@pytest.fixture(scope="module")
def ref_path():
    return trk.build_reference_track()


def polyline_headings(path):
    d = np.diff(path.xy, axis=0)
    return np.arctan2(d[:, 1], d[:, 0])


class TestBuildTrack:
    def test_total_length(self, ref_path):
        base = 60 + np.pi * 20 + 200 + 100 + np.pi * 10
        assert ref_path.length > base

    def test_spacing_band(self, ref_path):
        gaps = np.diff(ref_path.s)
        assert gaps.min() >= 0.2 and gaps.max() <= 0.3

    def test_monotone_arclength(self, ref_path):
        assert np.all(np.diff(ref_path.s) > 0)

    def test_g1_continuity(self, ref_path):
        h = np.unwrap(polyline_headings(ref_path))
        jumps = np.abs(np.diff(h))
        assert np.degrees(jumps.max()) < 2.0

    def test_half_circle_curvature(self, ref_path):
        # mid-arc of the radius-20 half circle
        kappa = trk.max_polyline_curvature(ref_path, 80.0, 100.0)
        assert kappa == pytest.approx(0.05, abs=0.002)

    def test_bezier_heading_change(self):
        path = trk.build_track([{"type": "straight", "length": 20.0},
                                {"type": "bezier", "angle": 135.0},
                                {"type": "straight", "length": 20.0}])
        h = np.unwrap(polyline_headings(path))
        change = np.degrees(h[-1] - h[0])
        assert change == pytest.approx(135.0, abs=1.0)

    def test_bezier_peak_curvature_between_circles(self):
        path = trk.build_track([{"type": "straight", "length": 20.0},
                                {"type": "bezier", "angle": 135.0},
                                {"type": "straight", "length": 20.0}])
        kappa = trk.max_polyline_curvature(path, 15.0, path.length - 15.0)
        assert 0.05 < kappa < 0.1


class TestProject:
    def test_on_path_returns_own_s(self, ref_path):
        for s in (10.0, 150.0, 333.0, 480.0):
            p = ref_path.point_at(s)
            assert trk.project(ref_path, p[0], p[1]) == pytest.approx(s, abs=0.05)

    def test_lateral_offset_from_straight(self):
        path = trk.build_track([{"type": "straight", "length": 100.0}])
        s = trk.project(path, 40.0, 2.0)
        assert s == pytest.approx(40.0, abs=0.05)

    def test_lost_vehicle_raises(self, ref_path):
        with pytest.raises(trk.TrackError):
            trk.project(ref_path, 0.0, -500.0)

    def test_hairpin_tie_prefers_larger_s(self):
        # hand-built U so the two legs mirror each other bit-exactly
        xs = np.arange(0.0, 30.0 + 1e-9, 0.25)
        leg1 = np.column_stack([xs, np.zeros_like(xs)])
        phi = np.linspace(-np.pi / 2, np.pi / 2, 64)[1:]
        arc = np.column_stack([30.0 + 5.0 * np.cos(phi), 5.0 + 5.0 * np.sin(phi)])
        leg2 = np.column_stack([xs[::-1][1:], np.full(len(xs) - 1, 10.0)])
        xy = np.vstack([leg1, arc, leg2])
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
        path = trk.RefPath(s=s, xy=xy)

        s_hit = trk.project(path, 10.0, 5.0)
        _, s_leg2 = trk.lateral_offset(path, 10.0, 10.0)
        assert s_hit > path.length / 2
        assert s_hit == pytest.approx(s_leg2, abs=0.3)

    def test_signed_lateral_offset(self):
        path = trk.build_track([{"type": "straight", "length": 100.0}])
        left, _ = trk.lateral_offset(path, 50.0, 1.5)
        right, _ = trk.lateral_offset(path, 50.0, -1.5)
        assert left == pytest.approx(1.5, abs=1e-6)
        assert right == pytest.approx(-1.5, abs=1e-6)


AX_MAX = staticmethod(lambda v: 4.0)


class TestFitWindow:
    def test_straight_window(self):
        path = trk.build_track([{"type": "straight", "length": 300.0}])
        w = trk.fit_window(path, 20.0, 60.0, v_x0=15.0, ax_max=lambda v: 4.0,
                           mu=1.0, horizon=3.0)
        assert w.kappa_max <= 1e-4
        assert w.v_max == pytest.approx(15.0 + 4.0 * 3.0)

    def test_circle_window_speed_bound(self):
        path = trk.build_track([{"type": "arc", "radius": 20.0, "angle": 300.0}])
        w = trk.fit_window(path, 30.0, 40.0, v_x0=10.0, ax_max=lambda v: 4.0,
                           mu=1.0, horizon=3.0)
        assert w.v_max == pytest.approx(np.sqrt(9.81 / 0.05), abs=0.1)

    def test_vmax_respects_both_branches(self, ref_path):
        rng = np.random.default_rng(3)
        for _ in range(20):
            s0 = rng.uniform(0.0, ref_path.length - 100.0)
            length = rng.uniform(10.0, 90.0)
            v0 = rng.uniform(2.0, 25.0)
            w = trk.fit_window(ref_path, s0, length, v_x0=v0,
                               ax_max=lambda v: 4.0, mu=1.0, horizon=3.0)
            assert w.v_max <= np.sqrt(9.81 / max(w.kappa_max, 1e-12)) + 1e-9
            assert w.v_max <= v0 + 4.0 * 3.0 + 1e-9

    def test_residuals_over_whole_track(self, ref_path):
        # sweep every window the planner can actually request: lengths follow
        # speeds that respect the curvature bound over the window itself
        pp = np.polynomial.polynomial
        mu, horizon = 1.0, 3.0
        for s0 in np.arange(0.0, ref_path.length - 11.0, 2.0):
            for v0 in (3.0, 5.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0):
                length = max(v0 * horizon, 10.0)
                if s0 + length > ref_path.length - 1.0:
                    continue
                kap = trk.max_polyline_curvature(ref_path, s0, s0 + length)
                if kap > 1e-9 and v0 > np.sqrt(mu * 9.81 / kap) * 1.05 + 0.3:
                    continue  # unreachable speed for this stretch
                w = trk.fit_window(ref_path, s0, length, v_x0=v0,
                                   ax_max=lambda v: 4.5, mu=mu, horizon=horizon)
                assert w.rms_residual <= 0.05
                mask = (ref_path.s >= s0) & (ref_path.s <= s0 + w.length)
                s_rel = ref_path.s[mask] - s0
                fx = pp.polyval(s_rel, w.p_x)
                fy = pp.polyval(s_rel, w.p_y)
                sup = np.max(np.hypot(fx - ref_path.xy[mask, 0],
                                      fy - ref_path.xy[mask, 1]))
                assert sup <= 0.1

    def test_short_remaining_path_raises(self):
        path = trk.build_track([{"type": "straight", "length": 50.0}])
        with pytest.raises(trk.TrackError):
            trk.fit_window(path, 45.0, 30.0, v_x0=10.0, ax_max=lambda v: 4.0,
                           mu=1.0, horizon=3.0)


class TestParabola:
    def make(self):
        return trk.build_parabola((0.0, 0.0), 1.0, 0.5, (0.0, 1.0))

    def test_center_positive(self):
        p = self.make()
        assert p.value(0.0, 0.0) == pytest.approx(1.5)

    def test_vertex_and_roots(self):
        p = self.make()
        assert p.value(0.0, 1.5) == pytest.approx(0.0, abs=1e-12)
        assert p.value(1.5, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert p.value(-1.5, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_far_side_feasible(self):
        p = self.make()
        for x in np.linspace(-20, 20, 41):
            assert p.value(x, 1.5) <= 1e-9
            assert p.value(x, 5.0) < 0.0

    def test_disc_containment(self):
        p = self.make()
        phi = np.linspace(0, 2 * np.pi, 360, endpoint=False)
        vals = p.value(np.cos(phi), np.sin(phi))
        assert np.all(vals > 0.0)

    def test_rotated_frame(self):
        n = np.array([1.0, 1.0]) / np.sqrt(2.0)
        p = trk.build_parabola((3.0, -2.0), 1.0, 0.5, n)
        vertex = np.array([3.0, -2.0]) + 1.5 * n
        assert p.value(*vertex) == pytest.approx(0.0, abs=1e-9)
        phi = np.linspace(0, 2 * np.pi, 360, endpoint=False)
        vals = p.value(3.0 + np.cos(phi), -2.0 + np.sin(phi))
        assert np.all(vals > 0.0)

    def test_gradient_matches_fd(self):
        p = self.make()
        rng = np.random.default_rng(5)
        for _ in range(20):
            x, y = rng.uniform(-3, 3, 2)
            g = p.gradient(x, y)
            h = 1e-6
            fd = np.array([(p.value(x + h, y) - p.value(x - h, y)) / (2 * h),
                           (p.value(x, y + h) - p.value(x, y - h)) / (2 * h)])
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)

    def test_validation(self):
        with pytest.raises(trk.TrackError):
            trk.build_parabola((0, 0), -1.0, 0.5, (0, 1))
        with pytest.raises(trk.TrackError):
            trk.build_parabola((0, 0), 1.0, 0.5, (0, 2.0))


class TestRelevantObstacles:
    def obstacles(self):
        mk = lambda s, lat: trk.Obstacle(center=np.zeros(2), radius=1.0,
                                         s_path=s, lateral=lat)
        return [mk(510.0, 0.0), mk(60.0, 0.0), mk(70.0, 10.0), mk(40.0, 0.5)]

    def test_far_ahead_excluded(self):
        sel = trk.relevant_obstacles(self.obstacles(), 50.0, 15.0, 3.0)
        assert all(o.s_path != 510.0 for o in sel)

    def test_near_included(self):
        sel = trk.relevant_obstacles(self.obstacles(), 50.0, 15.0, 3.0)
        assert any(o.s_path == 60.0 for o in sel)

    def test_wide_lateral_excluded(self):
        sel = trk.relevant_obstacles(self.obstacles(), 50.0, 15.0, 3.0)
        assert all(o.lateral != 10.0 for o in sel)

    def test_just_behind_included(self):
        sel = trk.relevant_obstacles(self.obstacles(), 43.0, 15.0, 3.0)
        assert any(o.s_path == 40.0 for o in sel)
