"""Walk through the singular potential, its truncation and the derived pressure."""
import numpy as np

from qnsch import Params, PotentialPack

params = Params()
pack = PotentialPack(params)
print("alpha =", params.alpha, " ell =", params.ell, " light phase density =", params.rho_lower)

# %% order parameter vs density
rho = np.linspace(params.rho_lower + 1e-3, 1 - 1e-3, 7)
phi = pack.phi_of_rho(rho)
for r, p in zip(rho, phi):
    print(f"rho={r:.4f}  phi={p:+.4f}")

# %% truncated core: identical inside, quadratic tail outside 1 - sigma
for sigma in (1e-1, 1e-2, 1e-3):
    a = 1 - sigma
    probe = np.array([0.0, a, 1.0, 1.5])
    print(f"sigma={sigma:g}  Fc_sigma at {probe} ->", np.round(pack.Fc(probe, 0, sigma), 4))

# %% pressure in density space, with the convex part vanishing at rho*
rs = pack.rho_star()
print("rho* =", rs, " convex pressure there:", float(pack.P_tilde(rs, convex_only=True)))
print("pressure at the symmetric density:", float(pack.P_tilde(params.rho_mid)))
print("uniform lower bound constant C* =", pack.C_star([1e-1, 1e-2, 1e-3]))
