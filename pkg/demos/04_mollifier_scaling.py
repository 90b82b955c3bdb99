"""How mollifying the initial density at width delta^(1/4) trades smoothness for fidelity."""
import numpy as np

from qnsch import Grid, Params
from qnsch import spectral as sp
from qnsch.state import build_initial_data, mollified_initial_density, mollifier_width

grid = Grid(2, 128)
params = Params()
rho0 = build_initial_data("bubble", grid, params).rho0

deltas = np.array([1e-1, 1e-2, 1e-3, 1e-4])
h2, gap = [], []
for delta in deltas:
    rho = mollified_initial_density(rho0, delta, grid)
    h2.append(sp.sobolev_norm(rho, 2, grid))
    gap.append(sp.sobolev_norm(rho - rho0, 1, grid))
    print(f"delta={delta:g}  width={mollifier_width(delta):.3f}  H2={h2[-1]:.2f}  H1 gap={gap[-1]:.3e}")

# %% the H2 norm grows roughly like a negative power of delta
slope = np.polyfit(np.log(deltas), np.log(h2), 1)[0]
print("fitted log-log slope of the H2 norm:", round(slope, 3))
