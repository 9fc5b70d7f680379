import time
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          objective_and_sensitivities, oc_update, DesignState, VOID_FLOOR,
                          objective_value)
from gyrox.homogenize import Homogenizer
from gyrox.tpms import voxelized_gyroid

config = TopOptConfig(objective=Objective.BULK, volume_fraction=0.35, r_min=1.5,
                      resolution=(16,16,16), max_iterations=1000)
initial = voxelized_gyroid(resolution=(16,16,16))
hom = Homogenizer(config.resolution, initial.cell_lengths, config.material, config.solver)
filt = build_filter(config.resolution, config.r_min)
eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
beta = 1.0
since = 0
t0 = time.time()
for it in range(1, 501):
    rho = filt.apply(eta)
    rho_h = heaviside_project(rho, beta)
    state = DesignState(eta, rho, rho_h, beta, it)
    f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
    eta_new = oc_update(eta, df, dv, config.volume_fraction, config.move_limit, filt, beta)
    change = float(np.abs(eta_new - eta).max())
    eta = eta_new
    since += 1
    hi = float((eta > 0.9).mean()); mid = float(((eta > 0.1) & (eta <= 0.9)).mean())
    bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
    if it % 10 == 0:
        print(f"it{it}: obj={f:.4f} vol={float(rho_h.mean()):.4f} chg={change:.4f} beta={beta} "
              f"eta>.9={hi:.3f} mid={mid:.3f} binfrac={bf:.3f}", flush=True)
    # hold beta=1 for 80 iterations to finish polarizing, then standard schedule
    if it < 80:
        continue
    if beta >= 512:
        if change < 0.01:
            print("CONVERGED", it, flush=True)
            break
    elif since >= 50 or change < 0.01:
        beta = min(2*beta, 512.0)
        since = 0
        print(f"  >> beta -> {beta} at it{it}", flush=True)
rho_h = heaviside_project(filt.apply(eta), beta)
bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
tens = hom.homogenize(rho_h).tensor
print(f"FINAL obj={objective_value(tens, config.objective):.4f} vol={rho_h.mean():.4f} binfrac={bf:.4f} t={time.time()-t0:.0f}s")
