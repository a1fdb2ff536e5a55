# %% [markdown]
# # Radio link budget
#
# Received power follows a log-distance law with Gaussian shadowing. Each
# scenario (furnished room, empty room, moving away, line of sight) has its
# own exponent and shadowing spread.

# %%
import numpy as np

from thermomon.channel import SCENARIO_DEFAULTS, ChannelParams, ScenarioKind, received_power

for kind in ScenarioKind:
    exponent, sigma = SCENARIO_DEFAULTS[kind]
    print(f"{kind.value}: exponent {exponent}, shadowing sigma {sigma} dB, line of sight: {kind.line_of_sight}")

# %% [markdown]
# ## Mean power versus distance
#
# Sensitivity is -89 dBm. The obstructed scenarios reach it between 30 and 50 m.
# Line of sight stays well above it.

# %%
distances = [10, 20, 30, 40, 50]
for kind in ScenarioKind:
    params = ChannelParams.for_scenario(kind)
    row = "  ".join(f"{received_power(params, d):7.2f}" for d in distances)
    print(f"{kind.value}: {row}   dBm at {distances} m")

# %% [markdown]
# ## Probability a single packet is decodable
#
# With shadowing, decoding is a coin flip near the boundary. A quick Monte
# Carlo with numpy draws shows the soft edge.

# %%
rng = np.random.default_rng(0)
for kind in (ScenarioKind.parse("S1"), ScenarioKind.parse("S2")):
    params = ChannelParams.for_scenario(kind)
    probs = []
    for d in distances:
        draws = rng.normal(0.0, params.shadow_sigma_db, 20_000)
        probs.append(np.mean(received_power(params, d) + draws >= params.sensitivity_dbm))
    print(kind.value, " ".join(f"{p:.3f}" for p in probs))
