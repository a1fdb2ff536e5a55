# %% [markdown]
# # The experiment harness
#
# Every assessment is a seeded, declarative run that returns a report bundle
# holding metrics, a time series and an alert log. The same runs are available
# from the `thermomon` command.

# %%
from thermomon.experiments import check_bundle, default_spec, run, spec_from_dict
from thermomon.experiments.runners import connectivity_lookup

for kind in ("stability", "wired", "linearity", "response", "agility", "scaling"):
    bundle = run(default_spec(kind))
    print(f"== {kind}")
    for label, ok, detail in check_bundle(bundle):
        print(f"   {'PASS' if ok else 'FAIL'}  {label}  {detail}")

# %% [markdown]
# ## Connectivity across scenarios
#
# Five derived seeds per (scenario, distance) point, 60 s each.

# %%
look = connectivity_lookup(run(default_spec("connectivity")))
for scen in ("S1", "S2", "S3", "S4"):
    print(scen, " ".join(f"{look[(scen, d)]:.2f}" for d in (10.0, 20.0, 30.0, 40.0, 50.0)))

# %% [markdown]
# ## Overriding a config
#
# Configs are plain JSON dictionaries. Unknown keys are rejected and the
# message names the offending field.

# %%
spec = spec_from_dict({"kind": "stability", "seed": 9, "sensor": {"noise_amp": 0.05}})
print(run(spec).metrics["smoothed_peak_to_peak_c"])
try:
    spec_from_dict({"kind": "stability", "sensor": {"noise": 0.05}})
except ValueError as exc:
    print("rejected:", exc)
