# %% [markdown]
# # Smoothing and alerts
#
# Each reading is averaged with the four before it. Three edge-triggered
# alerts sit on top: high temperature, rapid increase (least-squares slope of
# the smoothed values), and connectivity loss after consecutive misses.

# %%
import numpy as np

from thermomon.engine import seconds
from thermomon.monitor import Pipeline, ReadingRecord

rng = np.random.default_rng(12)
pipe = Pipeline(patients={0x5E1100000001: "bed-1"})

# a patient who is stable for a minute, then spikes a fever at 0.05 °C/s
t = np.arange(180.0)
truth = np.where(t < 60, 37.0, np.minimum(37.0 + 0.05 * (t - 60), 39.2))
for ti, temp in zip(t, truth):
    pipe.ingest(ReadingRecord(0x5E1100000001, "", seconds(ti), round(temp + rng.uniform(-0.125, 0.125), 2)))

print(pipe.alert_log())

# %% [markdown]
# ## Connectivity loss
#
# Five missed polls in a row raise one alert. It rearms once a reading gets through.

# %%
for k in range(180, 187):
    for alert in pipe.note_miss(0x5E1100000001, seconds(k)):
        print(alert.to_json())
