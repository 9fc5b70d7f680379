import time
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          objective_and_sensitivities, DesignState, VOID_FLOOR,
                          objective_value)
from gyrox.errors import BisectionFailedError
from gyrox.homogenize import Homogenizer
from gyrox.tpms import voxelized_gyroid

def oc_update_filtered(eta, df, dv_eta, target_eta, move, filt):
    s = np.maximum(df, 1e-10)
    v = dv_eta
    lo = np.clip(eta - move, 0.0, 1.0)
    hi = np.clip(eta + move, 0.0, 1.0)
    def cand(lam):
        return np.clip(eta * np.sqrt(s / (lam * v)), lo, hi)
    l1, l2 = 1e-9, 1e9
    if target_eta >= float(filt.apply(cand(l1)).mean()):
        return cand(l1)
    if target_eta <= float(filt.apply(cand(l2)).mean()):
        return cand(l2)
    for _ in range(200):
        lm = 0.5*(l1+l2)
        e = cand(lm)
        vol = float(filt.apply(e).mean())
        if abs(vol - target_eta) <= 1e-6:
            return e
        if vol > target_eta: l1 = lm
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
t_eta = float(filt.apply(eta).mean())
t0 = time.time()
N = eta.size
converged = False
for it in range(1, 801):
    rho = filt.apply(eta)
    rho_h = heaviside_project(rho, beta)
    vol_phys = float(rho_h.mean())
    # controller: steer the eta-volume target so physical volume hits V_f
    t_eta = float(np.clip(t_eta * (config.volume_fraction / max(vol_phys, 1e-9))**0.5,
                          t_eta*0.95, t_eta*1.05))
    t_eta = min(max(t_eta, 1e-4), 0.999)
    state = DesignState(eta, rho, rho_h, beta, it)
    f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
    # dv here is the physical-volume gradient; for the eta-volume constraint use W^T 1 / N = 1/N
    dv_eta = np.full(N, 1.0/N)
    eta_new = oc_update_filtered(eta, df, dv_eta, t_eta, config.move_limit, filt)
    change = float(np.abs(eta_new - eta).max())
    eta = eta_new
    since += 1
    if it % 20 == 0:
        bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
        print(f"it{it}: obj={f:.4f} volP={vol_phys:.4f} tEta={t_eta:.4f} chg={change:.4f} beta={beta} binfrac={bf:.3f}", flush=True)
    vol_ok = abs(vol_phys - config.volume_fraction) < 0.01
    if beta >= 512:
        if change < 0.01 and abs(vol_phys - config.volume_fraction) <= 1e-3:
            converged = True
            print("CONVERGED at", it, flush=True)
            break
    elif vol_ok and (since >= 50 or change < 0.01):
        beta = min(2*beta, 512.0)
        since = 0

rho = filt.apply(eta); rho_h = heaviside_project(rho, beta)
bf = float(((rho_h > 0.05) & (rho_h < 0.95)).mean())
tens = hom.homogenize(rho_h).tensor
print(f"FINAL: conv={converged} obj={objective_value(tens, config.objective):.4f} vol={rho_h.mean():.4f} binfrac={bf:.4f} t={time.time()-t0:.0f}s")
hist2, edges2 = np.histogram(eta, bins=[0,1e-4,1e-3,1e-2,0.1,0.3,0.6,0.9,1.0001])
print("eta hist:", dict(zip([f"{a:g}-{b:g}" for a,b in zip(edges2[:-1],edges2[1:])], hist2)))
