#!/usr/bin/env python3
"""Runs the msra CLI on small configurations and validates every JSON output."""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource


def load_registry(schema_dir):
    schemas = {}
    resources = []
    for path in sorted(schema_dir.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        schemas[path.name] = schema
        resource = Resource.from_contents(schema)
        resources.append((schema["$id"], resource))
    return schemas, Registry().with_resources(resources)


def main():
    binary, schema_dir, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    schemas, registry = load_registry(schema_dir)
    failures = []

    def check(document, schema_name, label):
        validator = jsonschema.Draft202012Validator(schemas[schema_name], registry=registry)
        errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
        for e in errors:
            failures.append(f"{label}: {'/'.join(map(str, e.path))}: {e.message}")
        print(f"{'ok  ' if not errors else 'FAIL'} {label} against {schema_name}")

    def run(command, config, out, expect=0):
        out.mkdir(parents=True, exist_ok=True)
        cfg = out / "config.json"
        cfg.write_text(json.dumps(config))
        check(config, "config.schema.json", f"{command} config")
        proc = subprocess.run([binary, command, "--config", str(cfg), "--out", str(out)],
                              capture_output=True, text=True)
        if proc.returncode != expect:
            failures.append(f"{command}: exit {proc.returncode}, expected {expect}: {proc.stderr.strip()}")

    shutil.rmtree(work, ignore_errors=True)
    gaussian = {"type": "gaussian", "covariance": [[0.5, 0.25, 0], [0.25, 0.5, 0], [0, 0, 0.6]]}
    quad = {"family": "quadratic_systemic", "d": 3, "params": {"alpha": 0.5, "linear": False}}

    run("simulate", {"model": gaussian, "solver": {"n_scenarios": 2000, "seed": 1}}, work / "simulate")
    check(json.loads((work / "simulate" / "summary.json").read_text()), "simulate_summary.schema.json", "summary.json")

    run("allocate", {"model": gaussian, "loss": quad, "solver": {"n_scenarios": 20000, "seed": 2}}, work / "allocate")
    check(json.loads((work / "allocate" / "allocation.json").read_text()), "allocation.schema.json", "allocation.json")

    run("allocate", {"model": {"type": "gaussian", "covariance": [[0.25, 0.25], [0.25, 1]]},
                     "loss": {"family": "exp_bivariate", "params": {"alpha": 1}},
                     "solver": {"backend": "quadrature", "tol": 1e-10}}, work / "quadrature")
    check(json.loads((work / "quadrature" / "allocation.json").read_text()), "allocation.schema.json",
          "quadrature allocation.json")

    run("sensitivity", {"model": gaussian, "loss": quad,
                        "solver": {"n_scenarios": 20000, "seed": 3, "tol": 1e-4},
                        "sensitivity": {"shock": {"type": "self"}, "method": "both", "alpha": True},
                        "plots": {"src_grid": {"points": 5}}}, work / "sensitivity")
    check(json.loads((work / "sensitivity" / "sensitivity.json").read_text()), "sensitivity.schema.json",
          "sensitivity.json")

    run("default-fund", {"model": {"type": "synthetic_book", "members": 4, "underlyings": 3},
                         "solver": {"n_scenarios": 5000, "seed": 4}}, work / "default_fund")
    check(json.loads((work / "default_fund" / "default_fund.json").read_text()), "default_fund.schema.json",
          "default_fund.json")

    run("validate-loss", {"loss": {"family": "ph2", "d": 4, "params": {"gain_weight": 0.5, "loss_weight": 1}}},
        work / "validate")
    check(json.loads((work / "validate" / "validation.json").read_text()), "validation.schema.json",
          "validation.json")

    run("allocate", {"model": gaussian, "loss": quad,
                     "solver": {"n_scenarios": 2000, "method": "kkt", "tol": 1e-15, "max_iterations": 1}},
        work / "solver_error", expect=2)
    check(json.loads((work / "solver_error" / "error.json").read_text()), "solver_error.schema.json", "error.json")

    for path in sorted((schema_dir.parent / "configs").glob("*.json")):
        check(json.loads(path.read_text()), "config.schema.json", f"configs/{path.name}")

    for f in failures:
        print("error:", f)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
