"""Validates the shipped topologies and scenarios against the schemas in docs/."""
import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource

root = pathlib.Path(sys.argv[1])
schemas = {name: json.loads((root / "docs" / name).read_text()) for name in ("topology.schema.json", "scenario.schema.json")}
registry = Registry().with_resources([(name, Resource.from_contents(s)) for name, s in schemas.items()])

failures = 0
targets = [("topology.schema.json", p) for p in sorted((root / "scenarios" / "topologies").glob("*.json"))]
targets += [("scenario.schema.json", p) for p in sorted((root / "scenarios").glob("*.json"))]
for schema, path in targets:
    validator = jsonschema.Draft202012Validator(schemas[schema], registry=registry)
    errors = list(validator.iter_errors(json.loads(path.read_text())))
    for e in errors:
        print(f"{path.relative_to(root)}: {e.json_path}: {e.message}")
    failures += bool(errors)
    if not errors:
        print(f"{path.relative_to(root)}: ok")
sys.exit(1 if failures else 0)
