"""Compare the numba-compiled kernels with the pure numpy/Python fallback.

Each backend runs in its own interpreter (the backend is fixed at import
time by SMI_DISABLE_NUMBA).  Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_accel.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from smi._accel import USE_NUMBA
from smi.kernels import smoothed_poisson_loglik
from smi.core import Delta, biased_data_model
from smi.closed_form import simulate_biased
from smi.samplers import McmcConfig, run_nested_mcmc

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
ys = rng.poisson(150.0, 2000).astype(float)
mus = rng.uniform(50.0, 300.0, 2000)
Y, Z = simulate_biased(np.random.default_rng(1))
model = biased_data_model()
cfg = McmcConfig(n_iter=1500, inner_steps=10, seed=3)


def poisson():
    return float(sum(smoothed_poisson_loglik(y, m, 8.0) for y, m in zip(ys, mus)))


def nested():
    return float(run_nested_mcmc(model, Delta(1.0), Y, Z, cfg).phi.mean())


out = {"numba": USE_NUMBA}
for name, fn in (("smoothed_poisson_2000", poisson), ("nested_mcmc_1500", nested)):
    value = fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    out[name] = {"seconds": min(times), "value": value}
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ)
    if disable:
        env["SMI_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SMI_DISABLE_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    print(f"{'workload':<24}{'numba s':>12}{'numpy s':>12}{'speed-up':>10}  agree")
    for name in ("smoothed_poisson_2000", "nested_mcmc_1500"):
        a, b = fast[name], slow[name]
        agree = abs(a["value"] - b["value"]) <= 1e-9 * max(1.0, abs(a["value"]))
        print(f"{name:<24}{a['seconds']:>12.4f}{b['seconds']:>12.4f}"
              f"{b['seconds'] / a['seconds']:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
