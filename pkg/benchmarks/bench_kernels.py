"""Compare the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the switch is read at import
time. Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from smc_ddpg import net
from smc_ddpg._jit import NUMBA_ENABLED
from smc_ddpg.ddpg import DDPGAgent, train_step
from smc_ddpg.harness import Hyperparameters, TrackingTask, evaluate, train
from smc_ddpg.net import ActorSpec, CriticSpec
from smc_ddpg.plant import MassSpringDamper, SinusoidReference
from smc_ddpg.smc import SurfaceSpec
from smc_ddpg.ddpg import Batch

repeat = int(sys.argv[1])
task = TrackingTask(MassSpringDamper(), SurfaceSpec(), SinusoidReference())
hyper = Hyperparameters()
rng = np.random.default_rng(0)
agent = DDPGAgent(ActorSpec(), CriticSpec(), seed=0)
batch = Batch(rng.normal(size=(70, 2)), rng.normal(size=70), rng.normal(size=70), rng.normal(size=70),
              rng.normal(size=(70, 2)), rng.normal(size=70), np.zeros(70, bool), np.zeros(70, bool))
z0 = np.zeros(4)

def sample():
    task.advance(0.3, z0, 0.1)

def step():
    train_step(agent, batch, hyper)

def episode():
    evaluate(task, agent.actor, [0.0, 0.0], hyper)

def train_episode():
    train(task, ActorSpec(), CriticSpec(), hyper.replace(episodes=2))

def best(fn, inner):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t0) / inner)
    return min(times)

out = {"numba": NUMBA_ENABLED,
       "closed-loop sample (0.1 s, 10 RK4 substeps)": best(sample, 200),
       "DDPG train step (64-wide nets, batch 70)": best(step, 50),
       "eval episode (70 samples)": best(episode, 5),
       "2 training episodes": best(train_episode, 1)}
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ)
    env.pop("SMC_DDPG_DISABLE_NUMBA", None)
    if disable:
        env["SMC_DDPG_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    if not fast.pop("numba"):
        print("warning: numba unavailable, both columns use the fallback", file=sys.stderr)
    slow.pop("numba")
    width = max(len(k) for k in fast)
    print(f"{'workload':<{width}}  {'numba':>11}  {'fallback':>11}  speedup")
    for key in fast:
        print(f"{key:<{width}}  {fast[key] * 1e3:9.3f}ms  {slow[key] * 1e3:9.3f}ms  {slow[key] / fast[key]:6.1f}x")


if __name__ == "__main__":
    main()
