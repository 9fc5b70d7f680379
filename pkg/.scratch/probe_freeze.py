import time
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          heaviside_derivative, objective_and_sensitivities, DesignState,
                          VOID_FLOOR, objective_value)
from gyrox.homogenize import Homogenizer
from gyrox.tpms import voxelized_gyroid

def oc_freeze(eta, df, dv, target, move, filt, beta):
    # freeze elements whose chained volume gradient is negligible (dead projection slope)
    vmax = float(dv.max())
    live = dv > 4e-2 * vmax
    s = np.maximum(df, 1e-10)
    lo = np.clip(eta - move, 0.0, 1.0); hi = np.clip(eta + move, 0.0, 1.0)
    def cand(lam):
        e = eta.copy()
        e[live] = np.clip(eta[live] * np.sqrt(s[live] / (lam * dv[live])), lo[live], hi[live])
        return e
    def vol(e): return float(heaviside_project(filt.apply(e), beta).mean())
    l1, l2 = 1e-9, 1e9
    if target >= vol(cand(l1)): return cand(l1)
    if target <= vol(cand(l2)): return cand(l2)
    e = None
    for _ in range(200):
        lm = 0.5*(l1+l2); e = cand(lm); v = vol(e)
        if abs(v - target) <= 1e-6: return e
        if v > target: l1 = lm
        else: l2 = lm
    return e

config = TopOptConfig(objective=Objective.BULK, volume_fraction=0.35, r_min=1.5,
                      resolution=(16,16,16), max_iterations=1000)
initial = voxelized_gyroid(resolution=(16,16,16))
hom = Homogenizer(config.resolution, initial.cell_lengths, config.material, config.solver)
filt = build_filter(config.resolution, config.r_min)
eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
beta = 1.0
since = 0
t0 = time.time()
converged = False
for it in range(1, 601):
    rho = filt.apply(eta)
    rho_h = heaviside_project(rho, beta)
    vol_now = float(rho_h.mean())
    state = DesignState(eta, rho, rho_h, beta, it)
    f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
    eta_new = oc_freeze(eta, df, dv, config.volume_fraction, config.move_limit, filt, beta)
    change = float(np.abs(eta_new - eta).max())
    eta = eta_new
    since += 1
    if it % 20 == 0:
        hi = float((eta > 0.9).mean()); mid = float(((eta > 0.1) & (eta <= 0.9)).mean())
        bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
        live = float((dv > 1e-6*dv.max()).mean())
        print(f"it{it}: obj={f:.4f} vol={vol_now:.4f} chg={change:.4f} beta={beta} "
              f"eta>.9={hi:.3f} mid={mid:.3f} binfrac={bf:.3f} live={live:.2f}", flush=True)
    at_tgt = abs(vol_now - config.volume_fraction) <= 0.01
    if beta >= 512:
        if change < 0.01 and at_tgt:
            converged = True
            print("CONVERGED", it, flush=True)
            break
    elif at_tgt and (since >= 50 or change < 0.01):
        beta = min(2*beta, 512.0)
        since = 0
        print(f"  >> beta -> {beta} at it{it}", flush=True)
rho = filt.apply(eta); rho_h = heaviside_project(rho, beta)
bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
tens = hom.homogenize(rho_h).tensor
print(f"FINAL conv={converged} obj={objective_value(tens, config.objective):.4f} "
      f"vol={rho_h.mean():.4f} binfrac={bf:.4f} t={time.time()-t0:.0f}s")
