# %% [markdown]
# # Running experiments and replaying them
#
# Every experiment writes versioned CSV/JSON files and a `manifest.json`
# holding the configuration, the seed rule and a sha256 digest per file.
# Re-running a manifest must reproduce every file byte for byte.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())


def apcrw(*args):
    res = subprocess.run([sys.executable, "-m", "apcrw", *args], capture_output=True, text=True)
    print(res.stdout or res.stderr)
    return res.returncode


# %%
apcrw("speed-curve", "--seed", "1", "--replicas", "300", "--set", "L=16", "--out", str(out / "curve"))
print((out / "curve" / "speed_curve.csv").read_text())

# %% [markdown]
# ## Replay

# %%
apcrw("replay", str(out / "curve" / "manifest.json"), "--out", str(out / "again"))

# %% [markdown]
# ## Configuration mistakes fail loudly
# Exit status 2 and a message naming the key.

# %%
print("exit status:", apcrw("speed", "--seed", "1", "--set", "L=8", "--set", "p_occ=0.3", "--set", "p_vac=0.9"))
print("exit status:", apcrw("speed", "--seed", "1"))
