from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dprelease.mechanisms import VariableSpec

# Toy demographic microdata in the style of a small county survey:
# 1000 rows, six declared variables.
DEMO_VARIABLES = [
    {"name": "age", "kind": "numeric", "lower": 18.0, "upper": 95.0},
    {"name": "sex", "kind": "categorical", "categories": ["female", "male"]},
    {"name": "income", "kind": "numeric", "lower": 0.0, "upper": 250000.0},
    {"name": "education", "kind": "numeric", "lower": 0.0, "upper": 20.0},
    {
        "name": "race",
        "kind": "categorical",
        "categories": ["white", "black", "asian", "hispanic", "mixed"],
    },
    {"name": "married", "kind": "boolean"},
]


def write_demo_csv(path: Path, n: int = 1000, seed: int = 3) -> None:
    gen = np.random.default_rng(seed)
    sexes = ["female", "male"]
    races = ["white", "black", "asian", "hispanic", "mixed", "unknown"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["age", "sex", "income", "education", "race", "married"])
        for i in range(n):
            age = round(float(gen.normal(45, 16)), 1)  # some fall outside [18, 95]
            income = round(float(gen.lognormal(10.4, 0.8)), 2)
            education = int(gen.integers(0, 21))
            row = [
                age,
                sexes[int(gen.integers(0, 2))],
                "" if i % 251 == 0 else income,  # a few missing incomes
                education,
                races[int(gen.integers(0, len(races)))],
                ["true", "false"][int(gen.integers(0, 2))],
            ]
            writer.writerow(row)


@pytest.fixture
def demo_csv(tmp_path: Path) -> Path:
    path = tmp_path / "demo.csv"
    write_demo_csv(path)
    return path


@pytest.fixture
def demo_schema_file(tmp_path: Path) -> Path:
    path = tmp_path / "schema.json"
    path.write_text(json.dumps({"variables": DEMO_VARIABLES}), encoding="utf-8")
    return path


@pytest.fixture
def demo_schema() -> list[VariableSpec]:
    specs = []
    for entry in DEMO_VARIABLES:
        specs.append(
            VariableSpec(
                name=entry["name"],
                kind=entry["kind"],
                lower=entry.get("lower"),
                upper=entry.get("upper"),
                categories=tuple(entry["categories"]) if "categories" in entry else None,
                n=1000,
            )
        )
    return specs


def unit_spec(n: int = 1000, lower: float = 0.0, upper: float = 1.0,
              name: str = "x") -> VariableSpec:
    return VariableSpec(name=name, kind="numeric", lower=lower, upper=upper, n=n)
