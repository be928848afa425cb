"""Training/eval experiment driver for benchmark tuning.

Usage: python3 tools/exp_train.py AGENT SEED TOTAL_STEPS [LAMBDA_CONS] [OUTDIR]
"""

import sys
import time

import torch

from semdrive import simworld
from semdrive.advisor import Advisor, AdvisorConfig
from semdrive.env import DrivingEnv
from semdrive.evalharness import compute_metrics, run_episodes
from semdrive.trainer import TrainConfig, train

torch.set_num_threads(1)

AGENT_BACKENDS = {"rl": "none", "mrl": "map_prior", "covlm": "oracle"}


def main():
    agent = sys.argv[1]
    seed = int(sys.argv[2])
    total_steps = int(sys.argv[3])
    lam = float(sys.argv[4]) if len(sys.argv) > 4 else 0.1
    outdir = sys.argv[5] if len(sys.argv) > 5 else f"/tmp/exp/{agent}_s{seed}"

    backend = AGENT_BACKENDS[agent]
    lambda_cons = lam if agent == "covlm" else 0.0
    cfg = TrainConfig(total_steps=total_steps, seed=seed, lambda_cons=lambda_cons)
    adv_cfg = AdvisorConfig(backend=backend)

    m_seen = simworld.load_bundled_map("map_seen")
    env = DrivingEnv(m_seen, max_steps=900)
    advisor = Advisor(adv_cfg)

    t0 = time.time()
    model, norm = train(env, advisor, cfg, outdir)
    t_train = time.time() - t0

    results = {}
    for map_id in ("map_seen", "map_unseen"):
        m = simworld.load_bundled_map(map_id)
        logs = run_episodes(model, norm, m, adv_cfg, n=10, seed=seed + 1000, max_steps=900)
        rep = compute_metrics(logs)
        terms = [l.terminal.value for l in logs]
        results[map_id] = (rep.SR, rep.RC, terms)

    print(f"{agent} seed={seed} steps={total_steps} lam={lambda_cons} train={t_train:.0f}s")
    for map_id, (sr, rc, terms) in results.items():
        print(f"  {map_id}: SR={sr:.2f} RC={rc:.2f} terms={terms}")


if __name__ == "__main__":
    main()
