"""A short regularised run from spinodal data, then a look at its diagnostics."""
import tempfile
from pathlib import Path

import numpy as np

from qnsch import runner
from qnsch.config import RunConfig, defaults

cfg = RunConfig(defaults()).with_overrides([
    "scheme.n = 64", "scheme.steps = 400", "output.cadence = 20", "init.velocity = 0.05",
])
out = Path(tempfile.mkdtemp(prefix="qnsch_demo_"))
result = runner.simulate(cfg, out, quiet=True)
print(result.message, "->", out)

# %% energy should go down, mass should stay put
energy = [r.E_sigma_delta for r in result.records]
mass = [r.mass_rho for r in result.records]
print("regularised energy: first %.6f  last %.6f" % (energy[0], energy[-1]))
print("largest step-to-step energy increase:", max(np.diff(energy).max(), 0.0))
print("mass drift:", max(mass) - min(mass))

# %% density stays inside the admissible band
print("rho range over the run: [%.4f, %.4f]" % (min(r.rho_min for r in result.records),
                                                 max(r.rho_max for r in result.records)))

# %% time-integrated pressure and its tail table
print("pressure L1:", result.summary["pressure"]["P_L1"])
for row in result.summary["tails"]:
    print(f"  M={row['M']:>6g}  measure={row['measure']:.3e}  tail={row['tail']:.3e}")

# %% gnuplot scripts for the CSV
for p in runner.write_plot_scripts(out / "diagnostics.csv"):
    print("wrote", p.name)
