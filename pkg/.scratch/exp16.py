import time, json
import numpy as np
from gyrox.topopt import (TopOptConfig, Objective, build_filter, heaviside_project,
                          objective_and_sensitivities, oc_update, DesignState, VOID_FLOOR,
                          objective_value, binarization_fraction)
from gyrox.homogenize import Homogenizer
from gyrox.grids import DensityGrid
from gyrox.tpms import voxelized_gyroid

def run(config, initial, ramp=None, gate=False, min_stable=1, label=""):
    hom = Homogenizer(config.resolution, initial.cell_lengths, config.material, config.solver)
    filt = build_filter(config.resolution, config.r_min)
    eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
    beta = config.schedule.beta_initial
    since = 0
    converged = False
    t0 = time.time()
    for it in range(1, config.max_iterations + 1):
        rho = filt.apply(eta)
        rho_h = heaviside_project(rho, beta)
        vol_now = float(rho_h.mean())
        if ramp:
            if vol_now > config.volume_fraction:
                target = max(config.volume_fraction, vol_now * (1 - ramp))
            else:
                target = min(config.volume_fraction, vol_now * (1 + ramp))
        else:
            target = config.volume_fraction
        state = DesignState(eta, rho, rho_h, beta, it)
        f, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
        eta_new = oc_update(eta, df, dv, target, config.move_limit, filt, beta)
        change = float(np.abs(eta_new - eta).max())
        eta = eta_new
        since += 1
        ok_gate = (not gate) or abs(vol_now - config.volume_fraction) < 0.01
        if beta >= config.schedule.beta_max:
            if change < config.change_tolerance and ok_gate:
                converged = True
                break
        elif ok_gate and (since >= config.schedule.double_every
                          or (change < config.schedule.change_threshold and since >= min_stable)):
            beta = min(2 * beta, config.schedule.beta_max)
            since = 0
        if it % 25 == 0:
            print(f"[{label}] it{it}: obj={f:.4f} vol={vol_now:.4f} ch={change:.4f} beta={beta}", flush=True)
    rho_h = heaviside_project(filt.apply(eta), beta)
    fg = DensityGrid(config.resolution, rho_h, initial.cell_lengths)
    tens = hom.homogenize(rho_h).tensor
    print(f"[{label}] DONE conv={converged} iters={it} obj={objective_value(tens, config.objective):.4f} "
          f"vol={float(rho_h.mean()):.4f} binfrac={binarization_fraction(fg):.4f} t={time.time()-t0:.0f}s", flush=True)

g = voxelized_gyroid(resolution=(16,16,16))
hom0 = Homogenizer((16,16,16))
t0 = hom0.homogenize(np.maximum(g.densities, 0.01)).tensor
print("initial 16^3: vol=", g.densities.mean(), "bulk obj:", float(t0.entries[:3,:3].sum()), flush=True)

base = dict(objective=Objective.BULK, volume_fraction=0.35, r_min=1.5,
            resolution=(16,16,16), max_iterations=400)
run(TopOptConfig(**base), g, ramp=None, gate=False, label="A-spec")
run(TopOptConfig(**base), g, ramp=0.05, gate=False, label="B-ramp")
run(TopOptConfig(**base), g, ramp=0.05, gate=True, min_stable=3, label="C-ramp-gate")
