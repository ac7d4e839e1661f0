# api/tests/test_radio.py
import math

import numpy as np
from django.test import SimpleTestCase

from api.services.gridworld import GridMap, generate_map
from api.services.radio import (
    BLACKOUT_THRESHOLD_DB, DEFAULT_MCS_EFFICIENCIES, Deployment, Site, antenna_gain, build_radio_map,
    is_blackout, line_of_sight, mcs_rate, normalize_sinr, path_loss, path_loss_db, pattern_gain_db,
    shadowing_field, supercover_cells,
)


def single_sector(**overrides):
    values = dict(
        sites=(Site(0.5, 0.5, height_m=10.0),),
        sector_azimuths_deg=(0.0,),
        shadow_sigma_los_db=0.0,
        shadow_sigma_nlos_db=0.0,
    )
    values.update(overrides)
    return Deployment(**values)


class FormulaTests(SimpleTestCase):

    def test_noise_floor(self):
        self.assertAlmostEqual(Deployment().noise_floor_dbm, -97.0)

    def test_normalization_bounds(self):
        self.assertEqual(float(normalize_sinr(BLACKOUT_THRESHOLD_DB)), 0.0)
        self.assertEqual(float(normalize_sinr(25.0)), 1.0)
        self.assertEqual(float(normalize_sinr(-30.0)), 0.0)
        self.assertEqual(float(normalize_sinr(40.0)), 1.0)
        midpoint = (BLACKOUT_THRESHOLD_DB + 25.0) / 2
        self.assertAlmostEqual(float(normalize_sinr(midpoint)), 0.5)

    def test_blackout_threshold(self):
        self.assertTrue(is_blackout(-8.5))
        self.assertFalse(is_blackout(BLACKOUT_THRESHOLD_DB))
        np.testing.assert_array_equal(is_blackout(np.array([-10.0, 0.0])), [True, False])

    def test_mcs_rate_steps(self):
        self.assertEqual(mcs_rate(-9.0), 0.0)
        self.assertAlmostEqual(mcs_rate(BLACKOUT_THRESHOLD_DB), DEFAULT_MCS_EFFICIENCIES[0] * 10e6)
        self.assertAlmostEqual(mcs_rate(30.0), DEFAULT_MCS_EFFICIENCIES[-1] * 10e6)
        rates = mcs_rate(np.linspace(-10, 30, 50))
        self.assertTrue(np.all(np.diff(rates) >= 0))

    def test_path_loss_values(self):
        self.assertAlmostEqual(float(path_loss_db(10.0, 2.0, True)), 50.0 + 20 * math.log10(2), places=6)
        self.assertAlmostEqual(float(path_loss_db(10.0, 2.0, False)), 59.4 + 26 * math.log10(2), places=6)
        distances = np.linspace(1, 500, 100)
        self.assertTrue(np.all(path_loss_db(distances, 2.0, False) >= path_loss_db(distances, 2.0, True)))
        self.assertTrue(np.all(np.diff(path_loss_db(distances, 2.0, True)) > 0))

    def test_pattern_gain_range(self):
        deployment = Deployment()
        angles = np.radians(np.linspace(-180, 180, 73))
        gains = pattern_gain_db(deployment, 0.0, 240 * np.cos(angles), 240 * np.sin(angles), 35.0)
        self.assertTrue(np.all(gains <= deployment.max_gain_dbi + 1e-9))
        self.assertTrue(np.all(gains >= deployment.max_gain_dbi - 30.0 - 1e-9))
        self.assertGreater(gains[36], gains[0])

    def test_boresight_at_downtilt_is_max_gain(self):
        deployment = Deployment()
        distance = (35.0 - deployment.agent_height_m) / math.tan(math.radians(deployment.downtilt_deg))
        gain = pattern_gain_db(deployment, 90.0, 0.0, distance, 35.0)
        self.assertAlmostEqual(float(gain), deployment.max_gain_dbi, places=6)


class GeometryTests(SimpleTestCase):

    def test_supercover_straight(self):
        self.assertEqual(supercover_cells((0, 0), (3, 0)), [(0, 0), (1, 0), (2, 0), (3, 0)])
        self.assertEqual(supercover_cells((0, 2), (0, 0)), [(0, 2), (0, 1), (0, 0)])

    def test_supercover_diagonal_touches_corners(self):
        cells = supercover_cells((0, 0), (2, 2))
        self.assertEqual(cells[0], (0, 0))
        self.assertEqual(cells[-1], (2, 2))
        self.assertIn((1, 0), cells)
        self.assertIn((0, 1), cells)
        self.assertIn((1, 1), cells)

    def test_line_of_sight(self):
        grid = GridMap.from_rows([
            '.....',
            '..@..',
            '.....',
        ])
        self.assertTrue(line_of_sight(grid, (0, 0), (4, 0)))
        self.assertFalse(line_of_sight(grid, (0, 1), (4, 1)))


class ShadowingTests(SimpleTestCase):

    def test_zero_sigma(self):
        grid = generate_map('random', 8, 8, seed=0)
        field = shadowing_field(grid, single_sector(), seed=1, los=True)
        np.testing.assert_array_equal(field, np.zeros((8, 8)))

    def test_seeded(self):
        grid = GridMap.from_rows(['.' * 20] * 20)
        deployment = Deployment()
        a = shadowing_field(grid, deployment, seed=4, los=True)
        b = shadowing_field(grid, deployment, seed=4, los=True)
        c = shadowing_field(grid, deployment, seed=5, los=True)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_variance_and_correlation(self):
        grid = GridMap.from_rows(['.' * 200] * 200)
        deployment = Deployment(decorr_los_m=1.0)
        field = shadowing_field(grid, deployment, seed=0, los=True)
        self.assertAlmostEqual(field.std(), 10.0, delta=0.5)
        lag_one = np.corrcoef(field[:, :-1].ravel(), field[:, 1:].ravel())[0, 1]
        self.assertAlmostEqual(lag_one, math.exp(-1.0), delta=0.05)


class RadioMapTests(SimpleTestCase):

    def test_single_sector_matches_link_budget(self):
        grid = GridMap.from_rows(['.' * 6] * 4)
        deployment = single_sector()
        radio = build_radio_map(grid, deployment)
        sector = deployment.sectors(grid)[0]
        for cell in ((1, 0), (5, 3), (2, 2)):
            expected = (
                deployment.tx_power_dbm + antenna_gain(deployment, sector, cell)
                - path_loss(deployment, sector, cell, los=True) - (-97.0)
            )
            self.assertAlmostEqual(radio.sinr_at(cell), expected, places=6)

    def test_wall_loss_applies_per_wall(self):
        grid = GridMap.from_rows([
            '.@...',
            '.@...',
        ])
        plain = build_radio_map(grid, single_sector())
        lossy = build_radio_map(grid, single_sector(wall_loss_db=7.0))
        self.assertAlmostEqual(plain.sinr_at((3, 0)) - lossy.sinr_at((3, 0)), 7.0, places=6)
        self.assertAlmostEqual(plain.sinr_at((0, 1)), lossy.sinr_at((0, 1)), places=6)

    def test_blocked_cells_have_zero_norm(self):
        grid = GridMap.from_rows(['..@', '...'])
        radio = build_radio_map(grid, single_sector())
        self.assertEqual(radio.norm_at((2, 0)), 0.0)
        self.assertTrue(np.all((radio.sinr_norm >= 0) & (radio.sinr_norm <= 1)))

    def test_interference_lowers_sinr(self):
        grid = GridMap.from_rows(['.' * 10] * 10)
        alone = build_radio_map(grid, single_sector())
        crowded = build_radio_map(grid, single_sector(
            sites=(Site(0.5, 0.5, height_m=10.0), Site(9.5, 9.5, height_m=10.0, azimuth_offset_deg=180.0)),
        ))
        self.assertEqual(crowded.n_sectors, 2)
        self.assertTrue(np.all(crowded.sinr_db[:, :5] <= alone.sinr_db[:, :5] + 1e-9))

    def test_serving_sector_is_strongest(self):
        grid = generate_map('room', 16, 16, seed=2)
        radio = build_radio_map(grid, Deployment(), seed=3)
        self.assertEqual(radio.n_sectors, 3)
        np.testing.assert_array_equal(radio.serving_sector, radio.rx_power_dbm.argmax(axis=0))

    def test_deterministic_and_read_only(self):
        grid = generate_map('random', 12, 12, seed=1)
        a = build_radio_map(grid, Deployment(), seed=7)
        b = build_radio_map(grid, Deployment(), seed=7)
        np.testing.assert_array_equal(a.sinr_db, b.sinr_db)
        with self.assertRaises(ValueError):
            a.sinr_db[0, 0] = 0.0

    def test_summary_and_rows(self):
        grid = GridMap.from_rows(['...', '.@.'])
        radio = build_radio_map(grid, single_sector())
        summary = radio.summary()
        self.assertEqual(summary['passable_cells'], 5)
        self.assertAlmostEqual(summary['noise_floor_dbm'], -97.0)
        self.assertEqual(summary['blackout_cells'], int(radio.blackout.sum()))
        rows = radio.rows()
        self.assertEqual(len(rows), 5)
        self.assertEqual(set(rows[0]), {'x', 'y', 'sinr_db', 'sinr_norm', 'serving_sector', 'blackout'})
        self.assertNotIn((1, 1), {(r['x'], r['y']) for r in rows})

    def test_coverage_hole_has_blackouts(self):
        grid = generate_map('coverage_hole', 24, 24, seed=0, cell_size_m=10.0)
        deployment = Deployment(
            sites=(Site(5.0, 5.0, azimuth_offset_deg=45.0), Site(235.0, 5.0, azimuth_offset_deg=135.0)),
            sector_azimuths_deg=(0.0,),
            shadow_sigma_los_db=0.0,
            shadow_sigma_nlos_db=0.0,
            wall_loss_db=7.0,
        )
        radio = build_radio_map(grid, deployment)
        self.assertGreater(int(radio.blackout.sum()), 0)
        self.assertFalse(radio.is_blackout_at((0, 0)))
