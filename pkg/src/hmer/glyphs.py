"""Fixed 8x8 bitmaps for the synthetic corpus. ``#`` is ink."""

import numpy as np

_RAW = {
    "0": """
        ..####..
        .#....#.
        .#...##.
        .#..#.#.
        .#.#..#.
        .##...#.
        .#....#.
        ..####..""",
    "1": """
        ...##...
        ..###...
        .#.##...
        ...##...
        ...##...
        ...##...
        ...##...
        .######.""",
    "2": """
        ..####..
        .#....#.
        ......#.
        .....#..
        ...##...
        ..#.....
        .#......
        .######.""",
    "3": """
        .#####..
        ......#.
        ......#.
        ..####..
        ......#.
        ......#.
        ......#.
        .#####..""",
    "4": """
        ....##..
        ...#.#..
        ..#..#..
        .#...#..
        .######.
        .....#..
        .....#..
        .....#..""",
    "5": """
        .######.
        .#......
        .#......
        .#####..
        ......#.
        ......#.
        .#....#.
        ..####..""",
    "6": """
        ..####..
        .#......
        .#......
        .#####..
        .#....#.
        .#....#.
        .#....#.
        ..####..""",
    "7": """
        .######.
        ......#.
        .....#..
        ....#...
        ...#....
        ...#....
        ...#....
        ...#....""",
    "8": """
        ..####..
        .#....#.
        .#....#.
        ..####..
        .#....#.
        .#....#.
        .#....#.
        ..####..""",
    "9": """
        ..####..
        .#....#.
        .#....#.
        ..#####.
        ......#.
        ......#.
        .....#..
        ..###...""",
    "a": """
        ........
        ........
        ..####..
        ......#.
        ..#####.
        .#....#.
        .#...##.
        ..###.#.""",
    "b": """
        .#......
        .#......
        .#......
        .#####..
        .#....#.
        .#....#.
        .#....#.
        .#####..""",
    "c": """
        ........
        ........
        ..####..
        .#....#.
        .#......
        .#......
        .#....#.
        ..####..""",
    "x": """
        ........
        ........
        .#....#.
        ..#..#..
        ...##...
        ...##...
        ..#..#..
        .#....#.""",
    "y": """
        ........
        .#....#.
        .#....#.
        ..#..#..
        ...##...
        ...#....
        ..#.....
        .#......""",
    "+": """
        ........
        ...#....
        ...#....
        .#####..
        ...#....
        ...#....
        ........
        ........""",
    "-": """
        ........
        ........
        ........
        .######.
        ........
        ........
        ........
        ........""",
    "=": """
        ........
        ........
        .######.
        ........
        ........
        .######.
        ........
        ........""",
    "(": """
        ....#...
        ...#....
        ..#.....
        ..#.....
        ..#.....
        ..#.....
        ...#....
        ....#...""",
    ")": """
        ...#....
        ....#...
        .....#..
        .....#..
        .....#..
        .....#..
        ....#...
        ...#....""",
    "\\sqrt": """
        .......#
        ......#.
        ......#.
        .....#..
        #....#..
        .#..#...
        ..#.#...
        ...#....""",
}


def _parse(text: str) -> np.ndarray:
    rows = [r.strip() for r in text.strip().splitlines()]
    bm = np.array([[c == "#" for c in r] for r in rows], dtype=np.float64)
    assert bm.shape == (8, 8), bm.shape
    return bm


GLYPHS: dict[str, np.ndarray] = {k: _parse(v) for k, v in _RAW.items()}

DIGITS = tuple("0123456789")
LETTERS = ("a", "b", "c", "x", "y")
OPERATORS = ("+", "-", "=")
# tokens that are never drawn; they encode layout only
LAYOUT_TOKENS = ("{", "}", "^")
