import time
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          objective_and_sensitivities, DesignState, VOID_FLOOR, objective_value)
from gyrox.homogenize import Homogenizer
from gyrox.tpms import voxelized_gyroid

def oc(eta, df, dv, target, move, filt, beta, damping):
    s = np.maximum(df, 1e-10)
    lo = np.clip(eta - move, 0.0, 1.0); hi = np.clip(eta + move, 0.0, 1.0)
    def cand(lam):
        return np.clip(eta * (s / (lam * dv))**damping, lo, hi)
    def vol(e): return float(heaviside_project(filt.apply(e), beta).mean())
    l1, l2 = 1e-9, 1e9
    if target >= vol(cand(l1)): return cand(l1)
    if target <= vol(cand(l2)): return cand(l2)
    for _ in range(200):
        lm = 0.5*(l1+l2); e = cand(lm); v = vol(e)
        if abs(v - target) <= 1e-6: return e
        if v > target: l1 = lm
        else: l2 = lm
    return e

config = TopOptConfig(objective=Objective.BULK, volume_fraction=0.35, r_min=1.5,
                      resolution=(16,16,16), max_iterations=1000)
initial = voxelized_gyroid(resolution=(16,16,16))

for damping in (0.5, 0.75):
    hom = Homogenizer(config.resolution, initial.cell_lengths, config.material, config.solver)
    filt = build_filter(config.resolution, config.r_min)
    eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
    beta = 1.0
    t0 = time.time()
    for it in range(1, 201):
        rho = filt.apply(eta)
        rho_h = heaviside_project(rho, beta)
        state = DesignState(eta, rho, rho_h, beta, it)
        f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
        eta_new = oc(eta, df, dv, config.volume_fraction, config.move_limit, filt, beta, damping)
        change = float(np.abs(eta_new - eta).max())
        eta = eta_new
        if it % 40 == 0:
            hi = float((eta > 0.9).mean()); mid = float(((eta > 0.1) & (eta <= 0.9)).mean())
            print(f"[d={damping}] it{it}: obj={f:.4f} vol={float(rho_h.mean()):.4f} chg={change:.4f} "
                  f"eta>0.9: {hi:.3f} mid: {mid:.3f}", flush=True)
    hist, edges = np.histogram(eta, bins=[0,1e-3,0.01,0.1,0.3,0.6,0.9,1.0001])
    print(f"[d={damping}] eta hist:", dict(zip([f"{a:g}-{b:g}" for a,b in zip(edges[:-1],edges[1:])], hist)),
          f"t={time.time()-t0:.0f}s", flush=True)
