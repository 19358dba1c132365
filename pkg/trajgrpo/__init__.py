import os

__version__ = os.getenv("TRAJGRPO_VERSION") or "0.1.0"
__description__ = "Physics-grounded rewards and GRPO for ego-vehicle trajectory planning"
