# api/tests/test_movingai.py
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from api.services.exceptions import MapFormatError, ScenarioFormatError
from api.services.gridworld import DEFAULT_WAREHOUSE_MAP, generate_map
from api.services.movingai import (
    Scenario, load_map, load_scen, parse_map, parse_scen, scenario_agents, serialize_map, serialize_scen,
    write_map,
)

FIXTURES = Path(__file__).resolve().parent / 'fixtures'


class MapParsingTests(SimpleTestCase):

    def test_fixture(self):
        grid = load_map(FIXTURES / 'small.map')
        self.assertEqual((grid.width, grid.height), (5, 3))
        self.assertEqual(grid.name, 'small')
        self.assertFalse(grid.is_passable((1, 1)))
        # 'T' est bloquant
        self.assertFalse(grid.is_passable((2, 2)))
        self.assertEqual(grid.blocked_count, 4)

    def test_passable_glyphs(self):
        grid = parse_map('type octile\nheight 1\nwidth 3\nmap\n.GS\n')
        self.assertEqual(grid.blocked_count, 0)

    def test_warehouse(self):
        grid = load_map(DEFAULT_WAREHOUSE_MAP)
        self.assertEqual((grid.width, grid.height), (161, 63))
        self.assertEqual(int(grid.largest_component.sum()), int(grid.passable_mask.sum()))

    def test_header_order_and_cell_size(self):
        grid = parse_map('type octile\nwidth 2\nheight 1\nmap\n.@\n', cell_size_m=2.5)
        self.assertEqual((grid.width, grid.height, grid.cell_size_m), (2, 1, 2.5))

    def test_errors_carry_line_numbers(self):
        cases = {
            'type octile\nheight 2\nwidth 2\nmap\n..\n': 6,
            'type octile\nheight 1\nwidth 2\nmap\n.x\n': 5,
            'type octile\nheight 1\nwidth 3\nmap\n..\n': 5,
            'type octile\nheight zero\nwidth 3\nmap\n...\n': 2,
            'octile\nheight 1\nwidth 1\nmap\n.\n': 1,
            'type octile\nheight 1\nwidth 1\ndata\n.\n': 4,
            'type octile\nheight 1\nwidth 1\nmap\n.\n.\n': 6,
        }
        for text, line in cases.items():
            with self.assertRaises(MapFormatError, msg=text) as caught:
                parse_map(text)
            self.assertEqual(caught.exception.line, line, msg=text)

    def test_round_trip_of_plain_maps(self):
        grid = generate_map('room', 20, 12, seed=3)
        self.assertEqual(parse_map(serialize_map(grid)), grid)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_map(grid, Path(tmp) / 'maps' / 'room.map')
            self.assertEqual(load_map(path), grid)

    def test_missing_file(self):
        with self.assertRaises(MapFormatError):
            load_map(FIXTURES / 'absent.map')

    def test_oversized_header_rejected_before_allocation(self):
        with self.assertRaises(MapFormatError) as caught:
            parse_map('type octile\nheight 1\nwidth 99999999999999\nmap\n..\n')
        self.assertEqual(caught.exception.line, 5)

    def test_bad_encoding_carries_line(self):
        with self.assertRaises(MapFormatError) as caught:
            parse_map(b'type octile\nheight 1\nwidth 2\nmap\n.\xff\n')
        self.assertEqual(caught.exception.line, 5)


class ScenarioTests(SimpleTestCase):

    def test_fixture(self):
        scenarios = load_scen(FIXTURES / 'open-8-6.scen')
        self.assertEqual(len(scenarios), 50)
        first = scenarios[0]
        self.assertEqual(first, Scenario(0, 'open-8-6.map', 8, 6, (0, 0), (7, 5), 12.0))

    def test_space_separated_rows(self):
        scenarios = parse_scen('version 1\n0 m.map 4 4 0 0 3 3 4.24264069\n\n')
        self.assertEqual(scenarios[0].goal, (3, 3))

    def test_errors(self):
        with self.assertRaises(ScenarioFormatError):
            parse_scen('')
        with self.assertRaises(ScenarioFormatError):
            parse_scen('version one\n')
        with self.assertRaises(ScenarioFormatError) as caught:
            parse_scen('version 1\n0\tm.map\t4\t4\t0\t0\t3\n')
        self.assertEqual(caught.exception.row, 2)
        with self.assertRaises(ScenarioFormatError):
            parse_scen('version 1\n0\tm.map\t4\t4\t0\t0\t4\t3\t1.0\n')

    def test_agents_from_rows(self):
        scenarios = load_scen(FIXTURES / 'open-8-6.scen')
        starts, goals = scenario_agents(scenarios, 3, offset=8)
        self.assertEqual(starts, [(0, 1), (1, 1), (2, 1)])
        self.assertEqual(goals, [(7, 4), (6, 4), (5, 4)])
        with self.assertRaises(ScenarioFormatError):
            scenario_agents(scenarios, 10, offset=45)

    def test_dimension_mismatch(self):
        scenarios = load_scen(FIXTURES / 'open-8-6.scen')
        grid = load_map(FIXTURES / 'small.map')
        with self.assertRaises(ScenarioFormatError):
            scenario_agents(scenarios, 2, grid=grid)

    def test_serialize(self):
        scenarios = load_scen(FIXTURES / 'open-8-6.scen')[:5]
        self.assertEqual(parse_scen(serialize_scen(scenarios)), scenarios)


GLYPHS = list('.@GSOTWx ') + ['\t', '\r', '\n', '0', '7', '-', 'é', '\u2028', '\x00', '\ufeff']


def mutate(text: str, rng: np.random.Generator) -> str:
    """Suppressions, insertions, troncatures et duplications de lignes au hasard"""
    chars = list(text)
    for _ in range(int(rng.integers(1, 6))):
        op = int(rng.integers(0, 10))
        pos = int(rng.integers(0, len(chars) + 1))
        if op < 4 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op < 8:
            chars.insert(pos, GLYPHS[int(rng.integers(len(GLYPHS)))])
        elif op == 8:
            chars = chars[:pos]
        else:
            lines = ''.join(chars).split('\n')
            i = int(rng.integers(len(lines)))
            lines.insert(i, lines[i])
            chars = list('\n'.join(lines))
    return ''.join(chars)


class MalformedInputTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(2024)
        self.maps = [
            (FIXTURES / 'small.map').read_text(),
            (FIXTURES / 'open-8-6.map').read_text(),
            serialize_map(generate_map('room', 12, 8, seed=1)),
        ]

    def assert_map_or_located_error(self, data):
        try:
            grid = parse_map(data)
        except MapFormatError as e:
            self.assertIsInstance(e.line, int, msg=repr(data))
            self.assertGreaterEqual(e.line, 1, msg=repr(data))
        else:
            self.assertEqual(grid.cells.shape, (grid.height, grid.width))

    def test_mutated_maps(self):
        for source in self.maps:
            for _ in range(300):
                self.assert_map_or_located_error(mutate(source, self.rng))

    def test_mutated_bytes(self):
        for source in self.maps:
            for _ in range(100):
                data = bytearray(mutate(source, self.rng).encode('utf-8'))
                data.insert(int(self.rng.integers(len(data) + 1)), int(self.rng.integers(128, 256)))
                self.assert_map_or_located_error(bytes(data))

    def test_random_headers(self):
        for _ in range(200):
            height, width = (int(v) for v in self.rng.integers(-3, 10 ** 12, size=2))
            text = f'type octile\nheight {height}\nwidth {width}\nmap\n' + '.' * int(self.rng.integers(0, 4)) + '\n'
            self.assert_map_or_located_error(text)

    def test_mutated_scenarios(self):
        source = (FIXTURES / 'open-8-6.scen').read_text()
        for _ in range(300):
            data = mutate(source, self.rng)
            try:
                parse_scen(data)
            except ScenarioFormatError as e:
                self.assertIsInstance(e.row, int, msg=repr(data))
                self.assertGreaterEqual(e.row, 1, msg=repr(data))
