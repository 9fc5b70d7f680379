import time
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          objective_and_sensitivities, oc_update, DesignState, VOID_FLOOR,
                          objective_value, binarization_fraction)
from gyrox.homogenize import Homogenizer
from gyrox.grids import DensityGrid
from gyrox.tpms import voxelized_gyroid

config = TopOptConfig(objective=Objective.BULK, volume_fraction=0.35, r_min=1.5,
                      resolution=(16,16,16), max_iterations=1000)
initial = voxelized_gyroid(resolution=(16,16,16))
hom = Homogenizer(config.resolution, initial.cell_lengths, config.material, config.solver)
filt = build_filter(config.resolution, config.r_min)
eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
beta = 1.0
since = 0
rho_h_prev = None
t0 = time.time()
for it in range(1, 501):
    rho = filt.apply(eta)
    rho_h = heaviside_project(rho, beta)
    change_phys = 1.0 if rho_h_prev is None else float(np.abs(rho_h - rho_h_prev).max())
    rho_h_prev = rho_h
    state = DesignState(eta, rho, rho_h, beta, it)
    f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
    eta_new = oc_update(eta, df, dv, config.volume_fraction, config.move_limit, filt, beta)
    change = float(np.abs(eta_new - eta).max())
    eta = eta_new
    since += 1
    stable = max(change, change_phys) < 0.01
    if it % 20 == 0 or (beta >= 512 and it % 5 == 0):
        bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
        print(f"it{it}: obj={f:.4f} vol={float(rho_h.mean()):.4f} chg={change:.4f} chgP={change_phys:.4f} beta={beta} binfrac={bf:.3f}", flush=True)
    if beta >= 512:
        if stable:
            print("PHYS-CONVERGED at", it, flush=True)
            break
    elif since >= 50 or stable:
        beta = min(2*beta, 512.0)
        since = 0

rho = filt.apply(eta); rho_h = heaviside_project(rho, beta)
bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
tens = hom.homogenize(rho_h).tensor
print(f"FINAL: obj={objective_value(tens, config.objective):.4f} vol={rho_h.mean():.4f} binfrac={bf:.4f} t={time.time()-t0:.0f}s")
hist, edges = np.histogram(rho_h, bins=[0,0.05,0.1,0.2,0.35,0.5,0.65,0.8,0.95,1.0001])
print("rho_h hist:", dict(zip([f"{a:.2f}-{b:.2f}" for a,b in zip(edges[:-1],edges[1:])], hist)))
hist2, edges2 = np.histogram(eta, bins=[0,1e-4,1e-3,1e-2,0.1,0.3,0.6,0.9,1.0001])
print("eta hist:", dict(zip([f"{a:g}-{b:g}" for a,b in zip(edges2[:-1],edges2[1:])], hist2)))
