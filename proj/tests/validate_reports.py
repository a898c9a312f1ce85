"""Run the CLI end to end and validate every report against the shipped schemas."""
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

cli = str(pathlib.Path(sys.argv[1]).resolve())
schema_dir = pathlib.Path(sys.argv[2])
config = str(pathlib.Path(sys.argv[3]).resolve())
report_schema = json.loads((schema_dir / "report.schema.json").read_text())
config_schema = json.loads((schema_dir / "synthetic-config.schema.json").read_text())
jsonschema.Draft202012Validator.check_schema(report_schema)
jsonschema.Draft202012Validator.check_schema(config_schema)
jsonschema.validate(json.loads(pathlib.Path(config).read_text()), config_schema)

fast = ["--boot", "10", "--trees", "20", "--seed", "3"]
with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    data = tmp / "d.csv"

    def run(*args):
        subprocess.run([cli, *map(str, args)], check=True, cwd=tmp, stdout=subprocess.DEVNULL)

    run("synthesize", "--config", config, "--seed", 1, "--out", data, "--report", tmp / "synthesize.json")
    with open(tmp / "inspect.json", "w") as f:
        subprocess.run([cli, "inspect", "--input", data], check=True, stdout=f)
    run("mitigate", "--input", data, "--report", tmp / "mitigate.json")
    run("fit", "--input", data, "--out", tmp / "fit.json")
    run("fit", "--input", data, "--learner", "forest", "--trees", 10, "--seed", 1, "--out", tmp / "fit-forest.json")
    run("interpret", "--input", data, "--technique", "type2-lr", "--out", tmp / "interpret.json")
    run("interpret", "--input", data, "--learner", "forest", "--technique", "perm-scaled", "--trees", 20,
        "--seed", 2, "--out", tmp / "interpret-forest.json")
    run("validate", "--input", data, "--boot", 5, "--seed", 1, "--out", tmp / "validate.json")
    for kind in ["prevalence", "dilution", "orderswap", "rq1", "rq2", "rq3", "rq4"]:
        run("experiment", kind, "--input", data, "--techniques", "type1,type2-chisq,gini-scaled", *fast,
            "--out", tmp / f"{kind}.json")

    validator = jsonschema.Draft202012Validator(report_schema)
    failures = 0
    for path in sorted(tmp.glob("*.json")):
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        for e in errors:
            print(f"{path.name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += bool(errors)
        print(f"{path.name}: {'invalid' if errors else 'valid'}")
    sys.exit(1 if failures else 0)
