# %% [markdown]
# # Regeneration times and the renewal-reward speed
#
# When the walker outruns the particles, some record times separate the
# past environment from the future.  Cutting the path there gives nearly
# independent blocks, and the ratio of summed displacements to summed
# durations estimates the speed.

# %%
import numpy as np

from apcrw import ApcrwParams, WalkParams
from apcrw.renewal import (ConeParams, detect_good_records, influence_tail, record_times, regeneration_times,
                           renewal_speed, simulate_plain)

base = ApcrwParams(1.5, 0.5, 0.6)
walk = WalkParams(0.9, 0.6)
traj, cloud = simulate_plain(base, walk, 2000, seed=7)
print("particle drift:", base.drift(), " walker displacement / time:", traj.positions[-1] / 2000)

# %% [markdown]
# ## Records and the influence field
# Cone slope `v_bar` sits between the particle drift and the walker speed.

# %%
cone = ConeParams(v_bar=0.3, v_star=0.5, drift=base.drift())
rec = record_times(traj, cone.v_bar)
print(len(rec), "records, first few:", rec[:8])
pts = [(int(traj.positions[n]), n) for n in range(100, 1800, 20)]
print("P(h > l) for l = 0..5:", np.round(influence_tail(cloud, pts, cone.v_bar, 60)["tail"][:6], 3))

# %% [markdown]
# ## Good records, regenerations and the estimate

# %%
scan = detect_good_records(traj, cloud, cone, T=2000, walk=walk)
print("why records were rejected:", scan.reasons)
taus = regeneration_times(traj, cloud, cone, 2000, walk, scan=scan)
inc = np.column_stack([np.diff(taus), np.diff(traj.positions[taus])])
print(renewal_speed(inc))
