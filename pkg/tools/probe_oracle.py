"""Drive each route with the raw advisor embedding as the action."""

from semdrive import simworld
from semdrive.advisor import Advisor, AdvisorConfig, embedding
from semdrive.env import DrivingEnv


def run(map_id, route_index, backend="oracle", max_steps=1200, verbose=False):
    m = simworld.load_bundled_map(map_id)
    env = DrivingEnv(m, max_steps=max_steps)
    env.reset(route_index)
    adv = Advisor(AdvisorConfig(backend=backend))
    while True:
        meta, omega, _ = adv.advise(env.snapshot, env.elapsed)
        res = env.step((omega[0], omega[1]))
        if verbose and env.elapsed % 40 == 0:
            e = res.snapshot.ego
            print(f"  t={env.elapsed} meta={meta.name:5s} pos=({e.x:6.1f},{e.y:6.1f}) "
                  f"v={e.speed:4.1f} d={res.snapshot.lateral_offset:5.2f} "
                  f"th={res.snapshot.heading_error:5.2f} s={res.snapshot.progress:6.1f}")
        if res.terminal is not None:
            frac = res.snapshot.progress / simworld.route_length(env.world.route)
            return res.terminal.value, env.elapsed, frac


if __name__ == "__main__":
    import sys
    verbose = "-v" in sys.argv
    for map_id, n_routes in (("map_seen", 3), ("map_unseen", 3)):
        for ri in range(n_routes):
            term, steps, frac = run(map_id, ri, verbose=verbose)
            print(f"{map_id} route {ri}: {term:15s} steps={steps:5d} progress={frac:.2f}")
