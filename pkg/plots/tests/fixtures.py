"""Hand-written CSV fixtures matching the harness file contracts."""
import numpy as np


def write_runlog(path, seeds=(0,), episodes=6, phase="train", evals=0):
    rng = np.random.default_rng(42)
    rows = ["phase,seed,episode,mu,cum_reward,state_cost,action_cost,"
            "steps,wall_ms,blowup"]
    for s in seeds:
        for e in range(1, episodes + 1):
            r = -100.0 + 10.0 * e + float(rng.normal()) * (5.0 if len(seeds) > 1 else 0.0)
            rows.append(f"{phase},{s},{e},{0.1!r},{r!r},{-r!r},{1.0!r},"
                        f"200,{12.5!r},0")
        for e in range(1, evals + 1):
            rows.append(f"eval,{s},{e},{0.2!r},{-50.0!r},{50.0!r},{1.0!r},"
                        f"200,{8.0!r},0")
    path.write_text("\n".join(rows) + "\n")
    return path


def write_stats(path, with_ci=True):
    rows = ["phase,n,mean,std,ci_low,ci_high"]
    for label, m in (("all", -80.0), (">100", -60.0), (">200", -40.0)):
        ci = f"{m - 5.0!r},{m + 5.0!r}" if with_ci else ","
        rows.append(f"{label},50,{m!r},{12.0!r},{ci}")
    path.write_text("\n".join(rows) + "\n")
    return path


def write_traj(path, ny=8, na=2, steps=12, mu=0.0):
    rng = np.random.default_rng(7)
    head = (["t_index", "mu"] + [f"y_{i}" for i in range(ny)]
            + [f"a_{i}" for i in range(na)] + ["reward"])
    rows = [",".join(head)]
    for t in range(steps):
        y = rng.normal(size=ny)
        a = np.zeros(na) if t == 0 else rng.uniform(-1, 1, size=na)
        r = 0.0 if t == 0 else -float(y @ y)
        rows.append(",".join([str(t), repr(mu)]
                             + [repr(float(v)) for v in y]
                             + [repr(float(v)) for v in a] + [repr(r)]))
    path.write_text("\n".join(rows) + "\n")
    return path


def write_field(path, n=5, mu=0.1):
    rng = np.random.default_rng(3)
    vel = rng.normal(size=(n, n, 2))
    ref = rng.normal(size=(n, n, 2))
    rows = ["i,j,vx,vy,ref_vx,ref_vy,mu,state_cost,action_cost"]
    for i in range(n):
        for j in range(n):
            cells = [vel[i, j, 0], vel[i, j, 1], ref[i, j, 0], ref[i, j, 1]]
            rows.append(f"{i},{j},"
                        + ",".join(repr(float(c)) for c in cells)
                        + f",{mu!r},{3.25!r},{0.5!r}")
    path.write_text("\n".join(rows) + "\n")
    return path
