# %% [markdown]
# # A polling round on the air
#
# The central node polls each thermometer by its identification code. Only
# the addressed node answers. It waits a short carrier-sense delay and sends
# its reading, and the central node acknowledges.

# %%
from thermomon.channel import ChannelParams
from thermomon.engine import to_seconds
from thermomon.experiments.network import Deployment, Node
from thermomon.protocol import ProtocolTiming, measurement_delay
from thermomon.sensor import BodyConstant, SensorSpec

nodes = [Node(0x5E1100000001, "bed-1", 4.0), Node(0x5E1100000002, "bed-2", 6.0)]
dep = Deployment(nodes, BodyConstant(37.0), ChannelParams.for_scenario("S4"), ProtocolTiming(), SensorSpec(), seed=3, keep_log=True)
dep.run(1.0)

for tx in dep.channel.log:
    print(f"{to_seconds(tx.start) * 1e3:8.3f} ms  +{tx.airtime:4d} us  from {tx.sender:#x}  {tx.payload}")

# %% [markdown]
# ## Losing the link
#
# At 45 m in a furnished room, polls and replies get lost. The master re-polls
# after each timeout and counts a miss once it runs out of retries. The next
# slot still starts on time.

# %%
far = [Node(0x5E1100000003, "bed-3", 45.0)]
dep = Deployment(far, BodyConstant(37.0), ChannelParams.for_scenario("S1"), ProtocolTiming(), SensorSpec(), seed=5)
dep.run(60.0)
print(dep.state.counters)

# %% [markdown]
# ## How delay grows with the ward
#
# Every thermometer gets one slot per round, so the time between two readings
# of the same patient grows linearly with the number of thermometers.

# %%
for n in (1, 2, 4, 8, 16, 32):
    d = measurement_delay(n, min_slot=ProtocolTiming().feasible_slot)
    print(f"N = {n:>2}: shortest round {d.min_feasible_round:.1f} s")
