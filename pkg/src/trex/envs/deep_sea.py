from __future__ import annotations

from importlib import resources

import numpy as np

from .base import EnvSpec, TabularMOEnv

SEABED = -1.0
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def load_grid(path=None) -> np.ndarray:
    """Parse a treasure map: ``.`` water (0), ``#`` seabed, numbers are treasures."""
    if path is None:
        text = resources.files("trex.envs").joinpath("data/deep_sea_treasure.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        # grid rows never contain letters; anything with prose is a comment
        if not line or any(ch.isalpha() for ch in line):
            continue
        row = []
        for tok in line.split():
            if tok == ".":
                row.append(0.0)
            elif tok == "#":
                row.append(SEABED)
            else:
                row.append(float(tok))
        rows.append(row)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"ragged treasure map, row widths {sorted(widths)}")
    return np.array(rows)


class DeepSeaTreasure(TabularMOEnv):
    """Submarine grid; objectives are treasure value and a -1 per-step time penalty.

    Moving off-grid or into seabed leaves the submarine in place. Entering a
    treasure cell ends the episode. The state key is the cell only (the time
    penalty is stationary); truncation at ``max_steps`` comes from the step
    counter.
    """

    def __init__(self, grid: np.ndarray | None = None, max_steps: int = 100):
        super().__init__()
        self.grid = load_grid() if grid is None else np.asarray(grid, dtype=np.float64)
        self.rows, self.cols = self.grid.shape
        self.spec = EnvSpec(
            name="deep-sea-treasure",
            observation_dim=3,
            action_count=4,
            objective_count=2,
            max_steps=max_steps,
            action_names=("up", "down", "left", "right"),
            objective_names=("treasure", "time"),
        )
        self.n_states = self.rows * self.cols

    def treasures(self) -> dict[tuple[int, int], float]:
        return {
            (int(r), int(c)): float(self.grid[r, c])
            for r, c in zip(*np.nonzero(self.grid > 0))
        }

    def _initial(self):
        return (0, 0)

    def _transition(self, cell, t, action):
        r, c = cell
        dr, dc = _MOVES[action]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < self.rows and 0 <= nc < self.cols) or self.grid[nr, nc] == SEABED:
            nr, nc = r, c
        value = float(self.grid[nr, nc]) if (nr, nc) != (r, c) else 0.0
        terminal = value > 0
        return (nr, nc), (max(value, 0.0), -1.0), terminal

    def _observe(self, cell, t):
        r, c = cell
        return np.array([r / (self.rows - 1), c / (self.cols - 1), t / self.spec.max_steps])

    def _key(self, cell, t):
        return cell[0] * self.cols + cell[1]

    def _decode(self, key):
        r, c = divmod(key, self.cols)
        if self.grid[r, c] != 0.0:
            return None
        return (r, c), 0

    def state_key(self, obs):
        r = int(round(float(obs[0]) * (self.rows - 1)))
        c = int(round(float(obs[1]) * (self.cols - 1)))
        return r * self.cols + c
