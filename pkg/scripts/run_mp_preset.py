"""Run the bundled model-problem configuration and summarise the trajectory.

usage: python3 scripts/run_mp_preset.py [out_dir]
"""
import json
import sys
from importlib import resources
from pathlib import Path

from bulksurf.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/mp_preset")
config = resources.files("bulksurf") / "configs" / "mp.json"
code = main(["run", "--config", str(config), "--out", str(out)])
if code:
    sys.exit(code)
recs = [json.loads(line) for line in (out / "trajectory.ndjson").read_text().splitlines()]
print(f"{len(recs)} samples, t = {recs[0]['t']} .. {recs[-1]['t']}")
print(f"max relative drift {max(r['drift'] for r in recs):.2e}")
print(f"min concentration {min(r['min_c'] for r in recs):.6f}")
energies = [r["F"] for r in recs if r["F"] is not None]
if energies:
    print(f"free energy {energies[0]:.10f} -> {energies[-1]:.10f}")
