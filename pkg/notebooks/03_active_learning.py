# # Uncertainty sampling versus random and oracle selection
#
# Starting from a small labelled set, each strategy adds one pool sample per
# iteration and refits. Uncertainty sampling takes the sample with the
# largest predicted uncertainty. The oracle baseline cheats by taking the
# largest true error, which bounds what any selection rule can achieve.

# %%
import numpy as np

from gpruq.active import STRATEGIES, ALConfig, ModelSpec, run_strategies, sine_benchmark
from gpruq.gpr import KernelParams

# %%
spec = ModelSpec(KernelParams(1.0, [1.0]), 0.05 ** 2)
cfg = ALConfig(n_init=10, n_iter=40, seed=0, n_members=5)
xp, yp, xt, yt = sine_benchmark(seed=0, n_pool=300, n_test=500)
traces = run_strategies(STRATEGIES, xp, yp, xt, yt, spec, cfg)

# %% [markdown]
# Test MAE after every tenth acquisition. All strategies start from the same
# initial set, so the first column is identical.

# %%
print("strategy           " + "".join(f"{i:>9d}" for i in range(0, 41, 10)))
for name, trace in traces.items():
    print(f"{name:<19}" + "".join(f"{trace.mae[i]:9.4f}" for i in range(0, 41, 10)))

# %% [markdown]
# Over several seeds the oracle should not lose to random selection.

# %%
finals = {"random": [], "oracle_max_error": [], "gpr_std": []}
for seed in range(5):
    xp, yp, xt, yt = sine_benchmark(seed)
    out = run_strategies(finals, xp, yp, xt, yt, spec, ALConfig(n_init=20, n_iter=30, seed=seed))
    for k in finals:
        finals[k].append(out[k].mae[-1])
for k, v in finals.items():
    print(f"{k:<17} mean final MAE {np.mean(v):.4f}")

# %% [markdown]
# Traces can be written as CSV for plotting elsewhere.

# %%
traces["gpr_std"].to_csv("al_trace_gpr_std.csv")
print("wrote al_trace_gpr_std.csv")
