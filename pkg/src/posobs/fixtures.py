"""Bundled example scenarios.

``ex1``: nonnegative two-state plant whose output matrix has a negative
entry, stabilized with feedback from both bounds.
``ex2``: the same plant with a negative entry in ``A``, made positive by
feedback.
``ex3``: noisy plant with unit-mean gamma disturbances.
``scalar``: one-dimensional noisy benchmark with a hand-solvable mean.
"""

import copy

_C = [[1.0, -1.0]]
_KL = [[-0.3, 0.0], [0.0, 0.0]]

EXAMPLES = {
    "ex1": {
        "system": {"A": [[1.2, 0.2], [0.0, 0.2]], "B": [[1.0, 0.0], [0.0, 1.0]], "C": _C,
                   "positivization_mode": False},
        "gains": {"L_upper": [[0.3], [0.0]], "L_lower": [[0.3], [0.0]],
                  "K_upper": [[0.0, 0.3], [0.0, 0.0]], "K_lower": _KL},
        "simulation": {"T": 50, "N": 1, "seed": 0, "shape": 1.0,
                       "x0": "uniform01", "xbar0": "ones", "xlow0": "zeros"},
        "synthesis": {"mode": "coupled", "eps": 1e-6, "D": 1e4,
                      "include_noise_conditions": False},
    },
    "ex2": {
        "system": {"A": [[1.2, 0.2], [-0.1, 0.2]], "B": [[1.0, 0.0], [0.0, 1.0]], "C": _C,
                   "positivization_mode": True},
        "gains": {"L_upper": [[0.3], [-0.1]], "L_lower": [[0.3], [-0.1]],
                  "K_upper": [[0.0, 0.3], [0.1, 0.0]], "K_lower": _KL},
        "simulation": {"T": 50, "N": 1, "seed": 0, "shape": 1.0,
                       "x0": "uniform01", "xbar0": "ones", "xlow0": "zeros"},
        "synthesis": {"mode": "coupled", "eps": 1e-6, "D": 1e4,
                      "include_noise_conditions": False},
    },
    "ex3": {
        "system": {"A": [[0.9, 0.2], [0.5, 0.2]], "B": [[1.0, 0.0], [0.0, 1.0]], "C": _C,
                   "E": [[0.02, 0.0], [0.0, 0.02]], "F": [[0.06]],
                   "positivization_mode": False},
        "gains": {"L_upper": [[0.6], [0.5]], "L_lower": [[0.2], [0.2]],
                  "K_upper": [[0.0, 0.3], [0.0, 0.2]], "K_lower": _KL},
        "simulation": {"T": 100, "N": 1, "seed": 0, "shape": 1.0,
                       "x0": "uniform01", "xbar0": "ones", "xlow0": "zeros"},
        "synthesis": {"mode": "coupled", "eps": 1e-6, "D": 1e4,
                      "include_noise_conditions": True},
    },
    "scalar": {
        "system": {"A": [[1.2]], "B": [[1.0]], "C": [[1.0]], "E": [[0.02]], "F": [[0.06]],
                   "positivization_mode": False},
        "gains": {"L_upper": [[0.5]], "L_lower": [[0.25]],
                  "K_upper": [[0.0]], "K_lower": [[-0.6]]},
        "simulation": {"T": 300, "N": 5000, "seed": 0, "shape": 1.0,
                       "x0": "zeros", "xbar0": "ones", "xlow0": "zeros"},
    },
}

REPRO_IDS = ("ex1", "ex2", "ex3")


def example_dict(name):
    """A deep copy of the raw scenario mapping."""
    try:
        return copy.deepcopy(EXAMPLES[name])
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}") from None


def example(name):
    from .scenario import from_dict
    return from_dict(example_dict(name))
