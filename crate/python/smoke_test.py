#!/usr/bin/env python3
"""Smoke test of the `bpre` Python extension.

Builds the extension if needed (`cargo build --release -p bpre-py`), imports
it, and exercises the main types and operations against known values:
closed-form variance series, the extinction fixed point, the geometric MGF
fixed point, martingale identities, and a campaign run through the same
runner the CLI uses.
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    lib = None
    for profile in ("release", "debug"):
        candidate = ROOT / "target" / profile / "libbpre.so"
        if candidate.exists():
            lib = candidate
            break
    if lib is None:
        print("building bpre-py ...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "bpre-py"], cwd=ROOT, check=True
        )
        lib = ROOT / "target" / "release" / "libbpre.so"
    stage = pathlib.Path(tempfile.mkdtemp(prefix="bpre-py-"))
    shutil.copy2(lib, stage / "bpre.so")
    sys.path.insert(0, str(stage))
    import bpre

    return bpre


CHECKS = []


def check(name, ok, detail=""):
    CHECKS.append((name, ok))
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")


def main():
    bpre = load_module()

    # Laws: exact moments and PGF values.
    pois = bpre.Law.poisson(2.0)
    check("poisson mean", pois.mean() == 2.0)
    check("poisson second moment", abs(pois.moment(2.0) - 6.0) < 1e-12)
    check("poisson pgf(0.5) = e^-1", abs(pois.pgf(0.5) - math.exp(-1.0)) < 1e-12)
    geo = bpre.Law.geometric_shifted(0.5)
    check("geometric support >= 1", min(geo.sample(200, seed=1)) >= 1)
    point = bpre.Law.finite([(5, 1.0)])
    check("point-mass total exact", point.sample_total(1000, seed=2) == 5000)

    # Environments: realization, shift, log P_n.
    model = bpre.Model.deterministic([pois])
    env = model.realize(120, env_seed=0)
    check("realized length", len(env) == 120)
    check("shift composes", env.shift(3).shift(4).offset() == env.shift(7).offset())
    check("log P_10 = 10 log 2", abs(env.log_pn(10) - 10 * math.log(2)) < 1e-12)

    # Limit objects: variance series, MGF fixed point, extinction.
    value, converged, _ = env.delta2(120)
    check("delta2 closed form", converged and abs(value - 1.0) < 1e-9, f"value={value}")
    geo_env = bpre.Model.deterministic([geo]).realize(120, env_seed=0)
    psi = geo_env.quenched_mgf(0.5, 40)
    check("mgf fixed point 1/(1-t)", abs(psi - 2.0) < 1e-6, f"psi={psi}")
    gw = bpre.Model.deterministic([bpre.Law.finite([(0, 0.25), (2, 0.75)])])
    q, inc = gw.realize(250, env_seed=0).extinction(200)
    check("extinction fixed point 1/3", abs(q - 1.0 / 3.0) < 1e-10, f"q={q}")

    # Trajectories: deterministic doubling keeps W = 1 and Z exact.
    doubling = bpre.Model.deterministic([bpre.Law.finite([(2, 1.0)])])
    traj = bpre.simulate(doubling.realize(60, env_seed=0), 60, traj_seed=0)
    check("doubling Z_60 exact", traj["z"][60] == 2**60 and not traj["capped"])
    check("doubling W = 1", all(abs(w - 1.0) < 1e-12 for w in traj["w"]))

    # Fluctuations: Var(W_hat - W_5) ~ 2^-5 for Poisson(2).
    pairs = bpre.sample_fluctuation(env, n=5, extra_depth=25, reps=20000, seed=3)
    dws = [dw for (_, dw) in pairs]
    m = sum(dws) / len(dws)
    var = sum((d - m) ** 2 for d in dws) / (len(dws) - 1)
    check("fluctuation variance ~ 2^-5", abs(var - 2**-5) < 0.1 * 2**-5, f"var={var}")

    # Limit sample + KS plumbing.
    a = bpre.limit_sample_quenched(env, reps=5000, depth=30, seed=4)
    b = bpre.limit_sample_quenched(env, reps=5000, depth=30, seed=5)
    d = bpre.ks_distance(a, b)
    thr = bpre.ks_threshold(5000, 5000)
    check("independent limit samples agree", d < thr, f"ks={d:.4f} thr={thr:.4f}")
    check("ks self-distance zero", bpre.ks_distance(a, a) == 0.0)

    # Whole campaign through the runner.
    names = [name for (name, _) in bpre.list_presets()]
    check("presets listed", "heyde-gw-clt" in names and "finite-state-tail" in names)
    report = json.loads(bpre.run_preset("delta-geometric"))
    check(
        "preset campaign passes",
        report["passed"] and abs(report["extra"]["value"] - 1.0) < 1e-9,
    )

    # Seed derivation is the documented hash.
    check("mix(0, 0) = 0", bpre.mix(0, 0) == 0)
    check("mix avalanche", bpre.mix(1, 0) == 0x5692161D100B05E5)

    failed = [name for name, ok in CHECKS if not ok]
    print(f"\n{len(CHECKS) - len(failed)}/{len(CHECKS)} checks passed")
    if failed:
        print("failed:", ", ".join(failed))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
