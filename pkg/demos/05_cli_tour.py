"""
The command line, driven from Python
====================================

Each subcommand reads an INI-style scenario (or flags) and writes CSV or
JSON. Here we call the entry point directly and show what comes out.
"""

import json
import tempfile
from pathlib import Path

from coagkit.cli import main

out = Path(tempfile.mkdtemp())

# closed-form values, no solver involved
main(["oracle", "--kind", "onecomp_time", "--t", "1", "--kmax", "5", "--output", str(out / "oracle.csv")])
print((out / "oracle.csv").read_text())

# envelope exponents decide existence
main(["classify", "--gamma", "1/6", "--lambda", "1/2"])

# a scenario file
cfg = out / "steady.ini"
cfg.write_text("""
[scenario]
name = injection
mode = steady
[kernel]
kind = diffusive
[source]
h = 1
[solver]
nmax = 1024
""")
main(["--config", str(cfg), "steady", "--output", str(out / "steady.csv")])

# a two-component run with the d=2 grid for plotting
main(["multicomp", "--dim", "2", "--cap", "32", "--tmax", "4", "--output", str(out / "mc.csv"),
      "--heatmap", str(out / "grid.csv")])
print("grid rows:", len((out / "grid.csv").read_text().splitlines()) - 1)
print(json.dumps(sorted(p.name for p in out.iterdir())))
